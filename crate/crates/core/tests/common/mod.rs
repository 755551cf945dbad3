//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use lapvard_ct::lapvard::VariationalState;
use lapvard_ct::projector::build_parallel_beam;
use lapvard_ct::simkit::{rasterize_phantom, simulate_counts, EllipsePhantomSpec, NoiseSpec};
use lapvard_ct::{GridSpec, ScanGeometry, Sinogram, SystemMatrix, WaveletBasis};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Random sparse matrix with roughly `density` of entries filled.
pub fn random_matrix(rng: &mut StdRng, n_rows: usize, n_cols: usize, density: f64, signed: bool) -> SystemMatrix {
    let rows = (0..n_rows)
        .map(|_| {
            (0..n_cols)
                .filter_map(|k| {
                    if rng.random::<f64>() >= density {
                        return None;
                    }
                    let v = rng.random_range(0.1..1.0);
                    let v = if signed && rng.random::<bool>() { -v } else { v };
                    Some((k, v))
                })
                .collect()
        })
        .collect();
    SystemMatrix::from_rows(n_cols, rows).unwrap()
}

pub fn dense_matvec(dense: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    dense.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn dense_transpose_matvec(dense: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = dense.first().map_or(0, Vec::len);
    (0..n).map(|j| dense.iter().zip(r).map(|(row, ri)| row[j] * ri).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn random_vec(rng: &mut StdRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Grid scan followed by golden-section refinement around the best cell.
pub fn global_min_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> f64 {
    let h = (hi - lo) / cells as f64;
    let best = (0..=cells)
        .map(|n| lo + n as f64 * h)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    golden_section(&f, (best - h).max(lo), (best + h).min(hi), 200)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// One draw from `Laplace(mu, b)` by inversion.
pub fn laplace_draw(rng: &mut StdRng, mu: f64, b: f64) -> f64 {
    let u: f64 = loop {
        let u: f64 = rng.random_range(-0.5..0.5);
        if u.abs() < 0.5 {
            break u;
        }
    };
    mu - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// 16×16 head phantom scanned with 24 × 24 rays, `Φ = H Ω` with 2 levels.
pub fn small_scan() -> (SystemMatrix, Sinogram, Vec<f64>) {
    let grid = GridSpec::new(16, 4.0).unwrap();
    let geom = ScanGeometry::new(24, 24, 3.8).unwrap();
    let h = build_parallel_beam(&grid, &geom).unwrap();
    let basis = WaveletBasis::new(16, 2).unwrap();
    let phi = h.compose_with_basis(&basis).unwrap();
    let truth = rasterize_phantom(&EllipsePhantomSpec::desk_head(16), &grid).unwrap();
    let noise = NoiseSpec { seed: 5, intensity: 1e4 };
    let sino = simulate_counts(&h, &truth, &noise).unwrap();
    let beta = basis.analyze(&truth).unwrap().into_inner();
    (phi, sino, beta)
}

/// A state near `beta` with random scales inside the domain box.
pub fn random_state(rng: &mut StdRng, phi: &SystemMatrix, beta: &[f64]) -> VariationalState {
    let max_abs = phi.max_abs_per_col();
    let mu = beta.iter().map(|&m| m + rng.random_range(-0.01..0.01)).collect();
    let b = max_abs
        .iter()
        .map(|&m| {
            let b: f64 = 10f64.powf(rng.random_range(-4.0..-2.0));
            if m > 0.0 { b.min(0.5 / m) } else { b }
        })
        .collect();
    let gamma = (0..beta.len()).map(|_| 10f64.powf(rng.random_range(-4.0..-1.0))).collect();
    VariationalState::new(mu, b, gamma).unwrap()
}
