//! Parallel-beam system matrices.
//!
//! The image grid is centered at the origin. Pixels are stored row-major with
//! row 0 at the top (largest `y`) and column 0 at the left (smallest `x`).
//!
//! A ray is parameterized by its view angle `theta` and signed detector
//! offset `s`: it is the line `{ s*n + t*d }` with normal `n = (cos θ, sin θ)`
//! and direction `d = (-sin θ, cos θ)`. At `θ = 0` rays are vertical.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::wavelet::WaveletBasis;

/// Stored entries with magnitude below this are dropped.
pub const DROP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub n_pixels_per_side: usize,
    /// Pixel edge length in mm.
    pub pixel_size: f64,
}

impl GridSpec {
    pub fn new(n_pixels_per_side: usize, pixel_size: f64) -> Result<Self> {
        let grid = GridSpec {
            n_pixels_per_side,
            pixel_size,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pixels_per_side == 0 {
            return Err(Error::InvalidParameter("grid must have at least one pixel per side".into()));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pixel_size must be positive, got {}",
                self.pixel_size
            )));
        }
        Ok(())
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels_per_side * self.n_pixels_per_side
    }

    /// Edge length of the whole grid square in mm.
    pub fn width(&self) -> f64 {
        self.n_pixels_per_side as f64 * self.pixel_size
    }

    /// Center of pixel `j` in mm.
    pub fn pixel_center(&self, j: usize) -> (f64, f64) {
        let n = self.n_pixels_per_side;
        let (row, col) = (j / n, j % n);
        let half = 0.5 * self.width();
        let x = -half + (col as f64 + 0.5) * self.pixel_size;
        let y = half - (row as f64 + 0.5) * self.pixel_size;
        (x, y)
    }

    /// Pixel containing the point, or `None` outside the grid.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let half = 0.5 * self.width();
        let n = self.n_pixels_per_side as f64;
        let col = ((x + half) / self.pixel_size).floor();
        let row = ((half - y) / self.pixel_size).floor();
        if col < 0.0 || row < 0.0 || col >= n || row >= n {
            return None;
        }
        Some(row as usize * self.n_pixels_per_side + col as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScanGeometry {
    /// View angles, uniform over `[0, π)`.
    pub n_angles: usize,
    pub n_detectors: usize,
    /// Detector bin spacing in mm.
    pub detector_spacing: f64,
}

impl ScanGeometry {
    pub fn new(n_angles: usize, n_detectors: usize, detector_spacing: f64) -> Result<Self> {
        let geom = ScanGeometry {
            n_angles,
            n_detectors,
            detector_spacing,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 || self.n_detectors == 0 {
            return Err(Error::InvalidParameter(format!(
                "scan geometry needs at least one angle and one detector, got {}x{}",
                self.n_angles, self.n_detectors
            )));
        }
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "detector_spacing must be positive, got {}",
                self.detector_spacing
            )));
        }
        Ok(())
    }

    pub fn n_rays(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    /// Ray `i`, ordered angle-major.
    pub fn ray(&self, i: usize) -> Ray {
        let (a, d) = (i / self.n_detectors, i % self.n_detectors);
        let angle = a as f64 * std::f64::consts::PI / self.n_angles as f64;
        let offset = (d as f64 - 0.5 * (self.n_detectors as f64 - 1.0)) * self.detector_spacing;
        Ray { angle, offset }
    }

    pub fn rays(&self) -> impl Iterator<Item = Ray> + '_ {
        (0..self.n_rays()).map(|i| self.ray(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub angle: f64,
    pub offset: f64,
}

impl Ray {
    pub fn normal(&self) -> (f64, f64) {
        (self.angle.cos(), self.angle.sin())
    }

    pub fn direction(&self) -> (f64, f64) {
        (-self.angle.sin(), self.angle.cos())
    }

    pub fn point(&self, t: f64) -> (f64, f64) {
        let (nx, ny) = self.normal();
        let (dx, dy) = self.direction();
        (self.offset * nx + t * dx, self.offset * ny + t * dy)
    }

    /// Parameter interval where the ray is inside the grid square.
    fn clip(&self, grid: &GridSpec) -> Option<(f64, f64)> {
        let half = 0.5 * grid.width();
        let (px, py) = self.point(0.0);
        let (dx, dy) = self.direction();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (p, d) in [(px, dx), (py, dy)] {
            if d.abs() < 1e-15 {
                if p < -half || p > half {
                    return None;
                }
            } else {
                let (a, b) = ((-half - p) / d, (half - p) / d);
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        (hi > lo).then_some((lo, hi))
    }
}

/// Length of the ray's chord through the grid square.
pub fn chord_length(grid: &GridSpec, ray: &Ray) -> f64 {
    ray.clip(grid).map_or(0.0, |(lo, hi)| hi - lo)
}

/// Intersection lengths of `ray` with every pixel it crosses, sorted by pixel.
///
/// Walks the ray from entry to exit, stepping across whichever grid line it
/// meets next.
pub fn trace_ray(grid: &GridSpec, ray: &Ray) -> Vec<(usize, f64)> {
    let Some((t_in, t_out)) = ray.clip(grid) else {
        return Vec::new();
    };
    let n = grid.n_pixels_per_side as i64;
    let h = grid.pixel_size;
    let half = 0.5 * grid.width();
    let (dx, dy) = ray.direction();

    // Start from the pixel containing a point slightly inside the entry.
    let t_probe = t_in + 1e-9 * (t_out - t_in);
    let (x0, y0) = ray.point(t_probe);
    let mut col = (((x0 + half) / h).floor() as i64).clamp(0, n - 1);
    let mut row = (((half - y0) / h).floor() as i64).clamp(0, n - 1);

    let step_col: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_row: i64 = if dy > 0.0 { -1 } else { 1 };
    let (px, py) = ray.point(0.0);
    let next_x = |col: i64| {
        if dx.abs() < 1e-15 {
            f64::INFINITY
        } else {
            let edge = -half + (col + i64::from(dx > 0.0)) as f64 * h;
            (edge - px) / dx
        }
    };
    let next_y = |row: i64| {
        if dy.abs() < 1e-15 {
            f64::INFINITY
        } else {
            let edge = half - (row + i64::from(dy < 0.0)) as f64 * h;
            (edge - py) / dy
        }
    };

    let mut out: Vec<(usize, f64)> = Vec::with_capacity(2 * grid.n_pixels_per_side + 2);
    let mut t = t_in;
    while t < t_out && (0..n).contains(&col) && (0..n).contains(&row) {
        let tx = next_x(col);
        let ty = next_y(row);
        let t_next = tx.min(ty).min(t_out);
        let len = t_next - t;
        if len > DROP_TOLERANCE {
            out.push(((row * n + col) as usize, len));
        }
        t = t_next.max(t);
        if t >= t_out {
            break;
        }
        // Crossing a corner advances both indices.
        if tx <= ty {
            col += step_col;
        }
        if ty <= tx {
            row += step_row;
        }
    }
    out.sort_unstable_by_key(|&(j, _)| j);
    merge_duplicates(&mut out);
    out
}

fn merge_duplicates(entries: &mut Vec<(usize, f64)>) {
    let mut w = 0;
    for r in 0..entries.len() {
        if w > 0 && entries[w - 1].0 == entries[r].0 {
            entries[w - 1].1 += entries[r].1;
        } else {
            entries[w] = entries[r];
            w += 1;
        }
    }
    entries.truncate(w);
}

/// Sparse matrix stored by rows (rays) with a column-major mirror.
///
/// Serves both as the ray-pixel operator `H` (nonnegative entries) and as the
/// composite `Φ = H·Ω` (signed entries).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    n_rays: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    col_ptr: Vec<usize>,
    csc_rows: Vec<usize>,
    csc_values: Vec<f64>,
    col_abs_sums: Vec<f64>,
    row_abs_sums: Vec<f64>,
    max_abs_per_col: Vec<f64>,
}

impl SystemMatrix {
    /// Builds a matrix from per-row `(column, weight)` lists.
    ///
    /// Rows are sorted by column; entries below [`DROP_TOLERANCE`] in
    /// magnitude are dropped. Duplicate columns within a row are rejected.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rays = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rays + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(k, _)| k);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidParameter(format!(
                        "duplicate column {} in row {i}",
                        w[0].0
                    )));
                }
            }
            for (k, v) in row {
                if k >= n_cols {
                    return Err(Error::InvalidParameter(format!(
                        "column {k} out of range (n_cols = {n_cols}) in row {i}"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("entry ({i},{k})")));
                }
                if v.abs() >= DROP_TOLERANCE {
                    col_idx.push(k);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self::assemble(n_rays, n_cols, row_ptr, col_idx, values))
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|k| vec![(k, 1.0)]).collect();
        Self::from_rows(n, rows).expect("identity is well formed")
    }

    fn assemble(
        n_rays: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let nnz = values.len();
        let mut counts = vec![0usize; n_cols + 1];
        for &k in &col_idx {
            counts[k + 1] += 1;
        }
        for k in 0..n_cols {
            counts[k + 1] += counts[k];
        }
        let col_ptr = counts.clone();
        let mut fill = counts;
        let mut csc_rows = vec![0usize; nnz];
        let mut csc_values = vec![0.0; nnz];
        let mut row_abs_sums = vec![0.0; n_rays];
        for i in 0..n_rays {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let k = col_idx[p];
                let slot = fill[k];
                fill[k] += 1;
                csc_rows[slot] = i;
                csc_values[slot] = values[p];
                row_abs_sums[i] += values[p].abs();
            }
        }
        let mut col_abs_sums = vec![0.0; n_cols];
        let mut max_abs_per_col = vec![0.0f64; n_cols];
        for k in 0..n_cols {
            for &v in &csc_values[col_ptr[k]..col_ptr[k + 1]] {
                col_abs_sums[k] += v.abs();
                max_abs_per_col[k] = max_abs_per_col[k].max(v.abs());
            }
        }
        SystemMatrix {
            n_rays,
            n_cols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            csc_rows,
            csc_values,
            col_abs_sums,
            row_abs_sums,
            max_abs_per_col,
        }
    }

    pub fn n_rays(&self) -> usize {
        self.n_rays
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and weights of ray `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Ray indices and weights of column `k`, ordered by ray.
    pub fn column(&self, k: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[k]..self.col_ptr[k + 1];
        (&self.csc_rows[r.clone()], &self.csc_values[r])
    }

    /// Offsets of each column's entries in column-major storage order.
    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn col_abs_sums(&self) -> &[f64] {
        &self.col_abs_sums
    }

    pub fn row_abs_sums(&self) -> &[f64] {
        &self.row_abs_sums
    }

    pub fn max_abs_per_col(&self) -> &[f64] {
        &self.max_abs_per_col
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// `A·x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("forward projection input", self.n_cols, x.len())?;
        Ok((0..self.n_rays)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&k, &v)| v * x[k]).sum()
            })
            .collect())
    }

    /// `Aᵀ·r`.
    pub fn back(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len("back projection input", self.n_rays, r.len())?;
        Ok((0..self.n_cols)
            .into_par_iter()
            .map(|k| {
                let (rows, vals) = self.column(k);
                rows.iter().zip(vals).map(|(&i, &v)| v * r[i]).sum()
            })
            .collect())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rays];
        for (i, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&k, &v) in cols.iter().zip(vals) {
                row[k] = v;
            }
        }
        dense
    }

    /// Debug dump as `row col weight` lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n_rays {
            let (cols, vals) = self.row(i);
            for (&k, &v) in cols.iter().zip(vals) {
                writeln!(out, "{i} {k} {v:e}")?;
            }
        }
        Ok(())
    }

    /// Explicit sparse product `self · Ω`, where `Ω` synthesizes an image from
    /// wavelet coefficients.
    pub fn compose_with_basis(&self, basis: &WaveletBasis) -> Result<SystemMatrix> {
        check_len("basis dimension", self.n_cols, basis.len())?;
        let omega = basis.as_matrix()?;
        let n_cols = omega.n_cols();
        let rows: Vec<Vec<(usize, f64)>> = (0..self.n_rays)
            .into_par_iter()
            .map_init(
                || (vec![0.0; n_cols], vec![false; n_cols]),
                |(acc, seen), i| {
                    let mut touched = Vec::new();
                    let (pix, h) = self.row(i);
                    for (&j, &hij) in pix.iter().zip(h) {
                        let (coeffs, w) = omega.row(j);
                        for (&k, &wjk) in coeffs.iter().zip(w) {
                            if !seen[k] {
                                seen[k] = true;
                                touched.push(k);
                            }
                            acc[k] += hij * wjk;
                        }
                    }
                    touched.sort_unstable();
                    let row = touched
                        .iter()
                        .map(|&k| {
                            let v = acc[k];
                            acc[k] = 0.0;
                            seen[k] = false;
                            (k, v)
                        })
                        .collect();
                    row
                },
            )
            .collect();
        SystemMatrix::from_rows(n_cols, rows)
    }
}

/// Parallel-beam ray-pixel intersection-length matrix.
pub fn build_parallel_beam(grid: &GridSpec, geom: &ScanGeometry) -> Result<SystemMatrix> {
    grid.validate()?;
    geom.validate()?;
    let rows = (0..geom.n_rays())
        .into_par_iter()
        .map(|i| trace_ray(grid, &geom.ray(i)))
        .collect();
    SystemMatrix::from_rows(grid.n_pixels(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_ray_through_single_pixel() {
        let grid = GridSpec::new(1, 1.0).unwrap();
        let ray = Ray {
            angle: std::f64::consts::FRAC_PI_2,
            offset: 0.0,
        };
        let entries = trace_ray(&grid, &ray);
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].0, 0);
        assert!((entries[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_ray_through_left_column() {
        let grid = GridSpec::new(2, 1.0).unwrap();
        let ray = Ray {
            angle: 0.0,
            offset: -0.5,
        };
        let entries = trace_ray(&grid, &ray);
        assert_eq!(entries.len(), 2);
        // Left column is pixels 0 (top) and 2 (bottom).
        assert_eq!(entries.iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 2]);
        for (_, w) in entries {
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_ray_through_corners() {
        let grid = GridSpec::new(4, 1.0).unwrap();
        let ray = Ray {
            angle: std::f64::consts::FRAC_PI_4,
            offset: 0.0,
        };
        let entries = trace_ray(&grid, &ray);
        assert_eq!(entries.len(), 4);
        let total: f64 = entries.iter().map(|e| e.1).sum();
        assert!((total - 4.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ray_missing_the_grid_is_empty() {
        let grid = GridSpec::new(4, 1.0).unwrap();
        let ray = Ray {
            angle: 0.3,
            offset: 10.0,
        };
        assert!(trace_ray(&grid, &ray).is_empty());
        assert_eq!(chord_length(&grid, &ray), 0.0);
    }

    #[test]
    fn rejects_zero_sized_inputs() {
        assert!(GridSpec::new(0, 1.0).is_err());
        assert!(GridSpec::new(4, 0.0).is_err());
        assert!(ScanGeometry::new(0, 4, 1.0).is_err());
        assert!(ScanGeometry::new(4, 0, 1.0).is_err());
    }

    #[test]
    fn scalar_products() {
        let a = SystemMatrix::from_rows(1, vec![vec![(0, 2.0)]]).unwrap();
        assert_eq!(a.forward(&[3.0]).unwrap(), vec![6.0]);
        assert_eq!(a.back(&[5.0]).unwrap(), vec![10.0]);
        assert_eq!(a.forward(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(a.back(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = SystemMatrix::identity(3);
        assert!(matches!(
            a.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(a.back(&[1.0]).is_err());
    }

    #[test]
    fn from_rows_rejects_duplicates_and_drops_tiny() {
        assert!(SystemMatrix::from_rows(3, vec![vec![(1, 1.0), (1, 2.0)]]).is_err());
        assert!(SystemMatrix::from_rows(3, vec![vec![(3, 1.0)]]).is_err());
        let a = SystemMatrix::from_rows(3, vec![vec![(2, 1.0), (0, 1e-14), (1, -4.0)]]).unwrap();
        assert_eq!(a.row(0).0, &[1, 2]);
        assert_eq!(a.max_abs_per_col(), &[0.0, 4.0, 1.0]);
        assert_eq!(a.row_abs_sums(), &[5.0]);
    }

    #[test]
    fn triplet_dump() {
        let a = SystemMatrix::from_rows(2, vec![vec![(1, 0.5)], vec![(0, 2.0)]]).unwrap();
        let mut buf = Vec::new();
        a.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0 1 5e-1\n1 0 2e0\n");
    }
}
