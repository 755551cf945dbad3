//! Multilevel orthonormal 2-D Haar transform.
//!
//! Coefficient layout of a [`CoefficientVector`], for `L` levels on a
//! `side × side` image:
//!
//! 1. the coarsest approximation block, `(side/2^L)²` values;
//! 2. for each level from `L` down to 1, three detail blocks of
//!    `(side/2^ℓ)²` values each, in the order
//!    [`DetailBlock::X`], [`DetailBlock::Y`], [`DetailBlock::XY`].
//!
//! Every block is row-major. One analysis step maps a pair `(a, b)` to
//! `((a+b)/√2, (a-b)/√2)`, first along rows, then along columns.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{check_len, Error, Result};
use crate::projector::SystemMatrix;
use crate::transmission::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetailBlock {
    /// High-pass along x (columns), low-pass along y.
    X,
    /// Low-pass along x, high-pass along y (rows).
    Y,
    /// High-pass along both axes.
    XY,
}

const BLOCKS: [DetailBlock; 3] = [DetailBlock::X, DetailBlock::Y, DetailBlock::XY];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletBasis {
    n_levels: usize,
    side: usize,
}

impl WaveletBasis {
    /// Orthonormal Haar basis. `n_levels = 0` is the identity transform.
    pub fn new(side: usize, n_levels: usize) -> Result<Self> {
        if side < 1 || !side.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "wavelet side must be a power of two, got {side}"
            )));
        }
        if n_levels >= usize::BITS as usize || side % (1usize << n_levels) != 0 {
            return Err(Error::InvalidParameter(format!(
                "side {side} is not divisible by 2^{n_levels}"
            )));
        }
        Ok(WaveletBasis { n_levels, side })
    }

    pub fn identity(side: usize) -> Result<Self> {
        Self::new(side, 0)
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of pixels, equal to the number of coefficients.
    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn approx_side(&self) -> usize {
        self.side >> self.n_levels
    }

    /// Offset of the given detail block in the flat layout.
    pub fn block_offset(&self, level: usize, block: DetailBlock) -> usize {
        debug_assert!((1..=self.n_levels).contains(&level));
        let mut offset = self.approx_side().pow(2);
        for l in (level + 1..=self.n_levels).rev() {
            offset += 3 * (self.side >> l).pow(2);
        }
        let pos = BLOCKS.iter().position(|&b| b == block).unwrap();
        offset + pos * (self.side >> level).pow(2)
    }

    /// `β = Ω̂·u`.
    pub fn analyze(&self, img: &Image) -> Result<CoefficientVector> {
        check_len("image side", self.side, img.side())?;
        let n = self.side;
        let mut buf = img.pixels().to_vec();
        let mut tmp = vec![0.0; n];
        for level in 1..=self.n_levels {
            let m = n >> (level - 1);
            analysis_step(&mut buf, n, m, &mut tmp);
        }
        Ok(CoefficientVector(self.gather(&buf)))
    }

    /// `u = Ω·β`.
    pub fn synthesize(&self, coeffs: &CoefficientVector) -> Result<Image> {
        check_len("coefficient vector", self.len(), coeffs.len())?;
        let n = self.side;
        let mut buf = self.scatter(coeffs.values());
        let mut tmp = vec![0.0; n];
        for level in (1..=self.n_levels).rev() {
            let m = n >> (level - 1);
            synthesis_step(&mut buf, n, m, &mut tmp);
        }
        Image::new(n, buf)
    }

    /// Flat layout from the in-place quadrant arrangement.
    fn gather(&self, buf: &[f64]) -> Vec<f64> {
        let n = self.side;
        let mut out = Vec::with_capacity(n * n);
        let a = self.approx_side();
        for r in 0..a {
            out.extend_from_slice(&buf[r * n..r * n + a]);
        }
        for level in (1..=self.n_levels).rev() {
            let h = n >> level;
            for block in BLOCKS {
                let (r0, c0) = quadrant_origin(block, h);
                for r in 0..h {
                    let start = (r0 + r) * n + c0;
                    out.extend_from_slice(&buf[start..start + h]);
                }
            }
        }
        out
    }

    fn scatter(&self, flat: &[f64]) -> Vec<f64> {
        let n = self.side;
        let mut buf = vec![0.0; n * n];
        let a = self.approx_side();
        let mut src = 0;
        for r in 0..a {
            buf[r * n..r * n + a].copy_from_slice(&flat[src..src + a]);
            src += a;
        }
        for level in (1..=self.n_levels).rev() {
            let h = n >> level;
            for block in BLOCKS {
                let (r0, c0) = quadrant_origin(block, h);
                for r in 0..h {
                    let start = (r0 + r) * n + c0;
                    buf[start..start + h].copy_from_slice(&flat[src..src + h]);
                    src += h;
                }
            }
        }
        buf
    }

    /// Coefficients whose basis function covers pixel `(row, col)`, with the
    /// basis function's value there. This is row `row*side + col` of `Ω`.
    fn pixel_row(&self, row: usize, col: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(1 + 3 * self.n_levels);
        let big_l = self.n_levels;
        let a = self.approx_side();
        let amp = 0.5f64.powi(big_l as i32);
        out.push(((row >> big_l) * a + (col >> big_l), amp));
        for level in 1..=big_l {
            let h = self.side >> level;
            let amp = 0.5f64.powi(level as i32);
            let sx = if (col >> (level - 1)) & 1 == 0 { 1.0 } else { -1.0 };
            let sy = if (row >> (level - 1)) & 1 == 0 { 1.0 } else { -1.0 };
            let within = (row >> level) * h + (col >> level);
            for (block, sign) in [
                (DetailBlock::X, sx),
                (DetailBlock::Y, sy),
                (DetailBlock::XY, sx * sy),
            ] {
                out.push((self.block_offset(level, block) + within, sign * amp));
            }
        }
        out
    }

    /// Explicit `Ω` (pixels × coefficients), so that `Ω·β = synthesize(β)`.
    pub fn as_matrix(&self) -> Result<SystemMatrix> {
        const MAX_SIDE: usize = 1024;
        if self.side > MAX_SIDE {
            return Err(Error::InvalidParameter(format!(
                "explicit wavelet matrix limited to side {MAX_SIDE}, got {}",
                self.side
            )));
        }
        let n = self.side;
        let rows = (0..n * n).map(|j| self.pixel_row(j / n, j % n)).collect();
        SystemMatrix::from_rows(n * n, rows)
    }
}

fn quadrant_origin(block: DetailBlock, h: usize) -> (usize, usize) {
    match block {
        DetailBlock::X => (0, h),
        DetailBlock::Y => (h, 0),
        DetailBlock::XY => (h, h),
    }
}

/// One level on the top-left `m × m` region of an `n`-wide buffer.
fn analysis_step(buf: &mut [f64], n: usize, m: usize, tmp: &mut [f64]) {
    let h = m / 2;
    for r in 0..m {
        let row = &mut buf[r * n..r * n + m];
        for c in 0..h {
            let (a, b) = (row[2 * c], row[2 * c + 1]);
            tmp[c] = (a + b) * FRAC_1_SQRT_2;
            tmp[h + c] = (a - b) * FRAC_1_SQRT_2;
        }
        row.copy_from_slice(&tmp[..m]);
    }
    for c in 0..m {
        for r in 0..h {
            let (a, b) = (buf[2 * r * n + c], buf[(2 * r + 1) * n + c]);
            tmp[r] = (a + b) * FRAC_1_SQRT_2;
            tmp[h + r] = (a - b) * FRAC_1_SQRT_2;
        }
        for r in 0..m {
            buf[r * n + c] = tmp[r];
        }
    }
}

fn synthesis_step(buf: &mut [f64], n: usize, m: usize, tmp: &mut [f64]) {
    let h = m / 2;
    for c in 0..m {
        for r in 0..h {
            let (lo, hi) = (buf[r * n + c], buf[(h + r) * n + c]);
            tmp[2 * r] = (lo + hi) * FRAC_1_SQRT_2;
            tmp[2 * r + 1] = (lo - hi) * FRAC_1_SQRT_2;
        }
        for r in 0..m {
            buf[r * n + c] = tmp[r];
        }
    }
    for r in 0..m {
        let row = &mut buf[r * n..r * n + m];
        for c in 0..h {
            let (lo, hi) = (row[c], row[h + c]);
            tmp[2 * c] = (lo + hi) * FRAC_1_SQRT_2;
            tmp[2 * c + 1] = (lo - hi) * FRAC_1_SQRT_2;
        }
        row.copy_from_slice(&tmp[..m]);
    }
}

/// 1-D orthonormal Haar analysis with layout `[A_L, D_L, D_{L-1}, ..., D_1]`.
pub fn analyze_1d(signal: &[f64], n_levels: usize) -> Result<Vec<f64>> {
    let n = signal.len();
    if n == 0 || !n.is_power_of_two() || n % (1usize << n_levels) != 0 {
        return Err(Error::InvalidParameter(format!(
            "1-D Haar needs a power-of-two length divisible by 2^{n_levels}, got {n}"
        )));
    }
    let mut out = signal.to_vec();
    let mut tmp = vec![0.0; n];
    let mut m = n;
    for _ in 0..n_levels {
        let h = m / 2;
        for c in 0..h {
            tmp[c] = (out[2 * c] + out[2 * c + 1]) * FRAC_1_SQRT_2;
            tmp[h + c] = (out[2 * c] - out[2 * c + 1]) * FRAC_1_SQRT_2;
        }
        out[..m].copy_from_slice(&tmp[..m]);
        m = h;
    }
    Ok(out)
}

/// Wavelet coefficients in the layout documented at module level.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(values: Vec<f64>) -> Self {
        CoefficientVector(values)
    }

    pub fn zeros(len: usize) -> Self {
        CoefficientVector(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for CoefficientVector {
    fn from(values: Vec<f64>) -> Self {
        CoefficientVector(values)
    }
}
