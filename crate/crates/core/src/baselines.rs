//! Alternating-minimization (AM) comparators in the image domain.
//!
//! Every iteration majorizes the Poisson data term by the separable
//! exponential surrogate
//!
//! ```text
//! s_j(u) = (Hᵀy)_j u + θ_j exp(-Z (u - u_j)),   θ_j = (Hᵀq)_j / Z,
//! ```
//!
//! with `Z = max_i Σ_j h_ij`, then minimizes surrogate plus penalty:
//!
//! - no penalty: closed form per pixel;
//! - wavelet-L1: proximal gradient on the surrogate in Haar coordinates,
//!   started from the unpenalized update (soft thresholding is the exact
//!   proximal map of `weight·|β|`);
//! - neighborhood-quadratic: the penalty is itself majorized by a separable
//!   quadratic, and each pixel is solved by Newton.
//!
//! Any point that does not increase surrogate plus penalty cannot increase
//! the true objective, so all three variants descend monotonically.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::projector::SystemMatrix;
use crate::report::SolveReport;
use crate::scalar::newton_bracketed;
use crate::transmission::{mean_counts_with_clamps, neg_log_likelihood, Image, Sinogram};
use crate::wavelet::{CoefficientVector, WaveletBasis};

/// Relative uphill tolerance of the descent guard.
pub const DESCENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    None,
    WaveletL1,
    NeighborhoodQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub weight: f64,
    /// Haar levels for the wavelet-L1 penalty.
    #[serde(default = "default_levels")]
    pub wavelet_levels: usize,
}

fn default_levels() -> usize {
    3
}

impl PenaltyConfig {
    pub fn none() -> Self {
        PenaltyConfig {
            kind: PenaltyKind::None,
            weight: 0.0,
            wavelet_levels: default_levels(),
        }
    }

    pub fn wavelet_l1(weight: f64, wavelet_levels: usize) -> Self {
        PenaltyConfig {
            kind: PenaltyKind::WaveletL1,
            weight,
            wavelet_levels,
        }
    }

    pub fn neighborhood(weight: f64) -> Self {
        PenaltyConfig {
            kind: PenaltyKind::NeighborhoodQuadratic,
            weight,
            wavelet_levels: default_levels(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "penalty weight must be nonnegative, got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmConfig {
    pub n_iterations: usize,
    /// Fraction of the surrogate step taken, in `(0, 1]`.
    pub damping: f64,
    /// Flat initial image value in mm⁻¹.
    pub init_value: f64,
    /// Proximal-gradient steps per iteration for the wavelet-L1 penalty.
    pub inner_iterations: usize,
}

impl Default for AmConfig {
    fn default() -> Self {
        AmConfig {
            n_iterations: 100,
            damping: 1.0,
            init_value: 0.01,
            inner_iterations: 20,
        }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.init_value >= 0.0 && self.init_value.is_finite()) {
            return Err(Error::InvalidParameter("initial image must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `sign(x) · max(|x| - threshold, 0)`.
pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    if x > threshold {
        x - threshold
    } else if x < -threshold {
        x + threshold
    } else {
        0.0
    }
}

/// 8-connected neighbors with weight 1 (edge) or 1/√2 (diagonal).
struct Neighborhood {
    side: usize,
}

impl Neighborhood {
    const OFFSETS: [(isize, isize, f64); 8] = [
        (-1, -1, std::f64::consts::FRAC_1_SQRT_2),
        (-1, 0, 1.0),
        (-1, 1, std::f64::consts::FRAC_1_SQRT_2),
        (0, -1, 1.0),
        (0, 1, 1.0),
        (1, -1, std::f64::consts::FRAC_1_SQRT_2),
        (1, 0, 1.0),
        (1, 1, std::f64::consts::FRAC_1_SQRT_2),
    ];

    fn of(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.side as isize;
        let (r, c) = ((j / self.side) as isize, (j % self.side) as isize);
        Self::OFFSETS.iter().filter_map(move |&(dr, dc, w)| {
            let (rr, cc) = (r + dr, c + dc);
            (rr >= 0 && rr < n && cc >= 0 && cc < n).then(|| ((rr * n + cc) as usize, w))
        })
    }
}

/// `½ Σ_{pairs} w_jk (u_j - u_k)²`, each unordered pair once.
pub fn neighborhood_roughness(img: &Image) -> f64 {
    let hood = Neighborhood { side: img.side() };
    let u = img.pixels();
    (0..u.len())
        .map(|j| {
            hood.of(j)
                .filter(|&(k, _)| k > j)
                .map(|(k, w)| 0.5 * w * (u[j] - u[k]).powi(2))
                .sum::<f64>()
        })
        .sum()
}

fn penalty_value(penalty: &PenaltyConfig, img: &Image) -> Result<f64> {
    Ok(match penalty.kind {
        PenaltyKind::None => 0.0,
        PenaltyKind::WaveletL1 => {
            let basis = WaveletBasis::new(img.side(), penalty.wavelet_levels)?;
            let beta = basis.analyze(img)?;
            penalty.weight * beta.values().iter().map(|b| b.abs()).sum::<f64>()
        }
        PenaltyKind::NeighborhoodQuadratic => penalty.weight * neighborhood_roughness(img),
    })
}

/// Negative log-likelihood plus the configured penalty.
pub fn objective_value(
    h: &SystemMatrix,
    sino: &Sinogram,
    penalty: &PenaltyConfig,
    img: &Image,
) -> Result<f64> {
    check_len("image", h.n_cols(), img.pixels().len())?;
    let q = crate::transmission::mean_counts(h, sino.air_scan(), img.pixels())?;
    Ok(neg_log_likelihood(sino, &q)? + penalty_value(penalty, img)?)
}

fn side_of(h: &SystemMatrix) -> Result<usize> {
    let side = (h.n_cols() as f64).sqrt().round() as usize;
    if side * side != h.n_cols() {
        return Err(Error::InvalidParameter(format!(
            "system matrix has {} columns, not a square image",
            h.n_cols()
        )));
    }
    Ok(side)
}

/// Per-pixel exponential surrogate of the data term around `anchor`.
struct DataSurrogate<'a> {
    anchor: &'a [f64],
    b_y: &'a [f64],
    theta: Vec<f64>,
    z: f64,
}

impl DataSurrogate<'_> {
    fn eval(&self, j: usize, u: f64) -> (f64, f64, f64) {
        let e = if self.theta[j] > 0.0 {
            self.theta[j] * (-self.z * (u - self.anchor[j])).exp()
        } else {
            0.0
        };
        (self.b_y[j] * u + e, self.b_y[j] - self.z * e, self.z * self.z * e)
    }

    fn total(&self, u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(j, &v)| self.eval(j, v).0).sum()
    }

    /// Unconstrained minimizer of `s_j`, with the log-ratio capped.
    fn minimizer(&self, j: usize) -> f64 {
        const MAX_LOG_STEP: f64 = 50.0;
        let (by, zt) = (self.b_y[j], self.z * self.theta[j]);
        let log_ratio = match (zt > 0.0, by > 0.0) {
            (true, true) => (zt / by).ln().clamp(-MAX_LOG_STEP, MAX_LOG_STEP),
            (true, false) => MAX_LOG_STEP,
            (false, true) => -MAX_LOG_STEP,
            (false, false) => 0.0,
        };
        self.anchor[j] + log_ratio / self.z
    }
}

/// Reconstructs an image by (penalized) alternating minimization.
pub fn run_am(
    h: &SystemMatrix,
    sino: &Sinogram,
    penalty: &PenaltyConfig,
    cfg: &AmConfig,
) -> Result<(Image, SolveReport)> {
    penalty.validate()?;
    cfg.validate()?;
    check_len("sinogram", h.n_rays(), sino.n_rays())?;
    let side = side_of(h)?;
    let basis = match penalty.kind {
        PenaltyKind::WaveletL1 => Some(WaveletBasis::new(side, penalty.wavelet_levels)?),
        _ => None,
    };
    let started = Instant::now();
    let name = match penalty.kind {
        PenaltyKind::None => "am",
        PenaltyKind::WaveletL1 => "am-wavelet",
        PenaltyKind::NeighborhoodQuadratic => "am-neighborhood",
    };
    let mut report = SolveReport::new(name);

    let b_y = h.back(sino.counts())?;
    let z = h.row_abs_sums().iter().copied().fold(0.0, f64::max);
    if !(z > 0.0) {
        return Err(Error::InvalidParameter("system matrix has no entries".into()));
    }
    let mut img = Image::constant(side, cfg.init_value);
    let mut objective = objective_value(h, sino, penalty, &img)?;
    report.push(0, objective, 0.0);
    let mut uphill_streak = 0;

    for it in 1..=cfg.n_iterations {
        let (q, clamps) = mean_counts_with_clamps(h, sino.air_scan(), img.pixels())?;
        report.clamps += clamps;
        let theta: Vec<f64> = h.back(&q)?.into_iter().map(|v| v / z).collect();
        let surrogate = DataSurrogate {
            anchor: img.pixels(),
            b_y: &b_y,
            theta,
            z,
        };
        let candidate = match penalty.kind {
            PenaltyKind::None => (0..img.pixels().len()).map(|j| surrogate.minimizer(j)).collect(),
            PenaltyKind::WaveletL1 => wavelet_step(
                &surrogate,
                basis.as_ref().expect("basis built for wavelet penalty"),
                penalty.weight,
                cfg.inner_iterations,
            )?,
            PenaltyKind::NeighborhoodQuadratic => neighborhood_step(&surrogate, side, penalty.weight),
        };
        let next: Vec<f64> = img
            .pixels()
            .iter()
            .zip(&candidate)
            .map(|(&u, &c)| u + cfg.damping * (c - u))
            .collect();
        let next = Image::new(side, next).map_err(|e| e.context(format!("{name} iteration {it}")))?;
        let value = objective_value(h, sino, penalty, &next)?;
        if value > objective + DESCENT_TOLERANCE * objective.abs() {
            uphill_streak += 1;
            if uphill_streak >= 3 {
                return Err(Error::Divergence(uphill_streak).context(format!("{name} iteration {it}")));
            }
        } else {
            uphill_streak = 0;
        }
        img = next;
        objective = value;
        report.push(it, objective, started.elapsed().as_secs_f64() * 1e3);
    }
    Ok((img, report))
}

/// Proximal gradient on `S(Ωβ) + w‖β‖₁`, monotone by backtracking.
fn wavelet_step(
    surrogate: &DataSurrogate<'_>,
    basis: &WaveletBasis,
    weight: f64,
    inner_iterations: usize,
) -> Result<Vec<f64>> {
    let side = basis.side();
    let l1 = |u: &[f64]| -> Result<f64> {
        let beta = basis.analyze(&Image::new(side, u.to_vec())?)?;
        Ok(weight * beta.values().iter().map(|b| b.abs()).sum::<f64>())
    };
    let unpenalized: Vec<f64> = (0..surrogate.anchor.len()).map(|j| surrogate.minimizer(j)).collect();
    if weight == 0.0 {
        // The proximal map of a zero penalty is the identity.
        return Ok(unpenalized);
    }
    let total = |u: &[f64]| -> Result<f64> { Ok(surrogate.total(u) + l1(u)?) };
    let mut u = if total(&unpenalized)? <= total(surrogate.anchor)? {
        unpenalized
    } else {
        surrogate.anchor.to_vec()
    };
    let mut s_u = surrogate.total(&u);
    let mut lipschitz = u
        .iter()
        .enumerate()
        .map(|(j, &v)| surrogate.eval(j, v).2)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for _ in 0..inner_iterations {
        let grad: Vec<f64> = u.iter().enumerate().map(|(j, &v)| surrogate.eval(j, v).1).collect();
        let beta = basis.analyze(&Image::new(side, u.clone())?)?;
        let grad_beta = basis.analyze(&Image::new(side, grad.clone())?)?;
        let mut accepted = false;
        for _ in 0..60 {
            let step = 1.0 / lipschitz;
            let trial: Vec<f64> = beta
                .values()
                .iter()
                .zip(grad_beta.values())
                .map(|(&b, &g)| soft_threshold(b - step * g, weight * step))
                .collect();
            let trial = basis.synthesize(&CoefficientVector::new(trial))?.into_pixels();
            let s_trial = surrogate.total(&trial);
            let (mut lin, mut sq) = (0.0, 0.0);
            for ((&t, &x), &g) in trial.iter().zip(&u).zip(&grad) {
                lin += g * (t - x);
                sq += (t - x) * (t - x);
            }
            if s_trial <= s_u + lin + 0.5 * lipschitz * sq {
                u = trial;
                s_u = s_trial;
                accepted = true;
                break;
            }
            lipschitz *= 2.0;
        }
        if !accepted {
            break;
        }
        lipschitz *= 0.5;
    }
    Ok(u)
}

/// Per-pixel minimization of the data surrogate plus a separable quadratic
/// majorizer of the neighborhood penalty:
/// `(u_j - u_k)² ≤ ½(2u_j - u_j⁰ - u_k⁰)² + ½(2u_k - u_j⁰ - u_k⁰)²`.
fn neighborhood_step(surrogate: &DataSurrogate<'_>, side: usize, weight: f64) -> Vec<f64> {
    let hood = Neighborhood { side };
    let anchor = surrogate.anchor;
    (0..anchor.len())
        .into_par_iter()
        .map(|j| {
            let pairs: Vec<(f64, f64)> = hood.of(j).map(|(k, w)| (w, anchor[j] + anchor[k])).collect();
            let f = |u: f64| {
                let (mut v, mut d1, mut d2) = surrogate.eval(j, u);
                for &(w, c) in &pairs {
                    let t = 2.0 * u - c;
                    v += weight * 0.25 * w * t * t;
                    d1 += weight * w * t;
                    d2 += 2.0 * weight * w;
                }
                (v, d1, d2)
            };
            let start = anchor[j];
            // Bracket the root of the derivative around the anchor.
            let mut width = 1.0 / surrogate.z;
            let dir = if f(start).1 < 0.0 { 1.0 } else { -1.0 };
            let mut far = start;
            for _ in 0..200 {
                far = start + dir * width;
                if dir * f(far).1 > 0.0 {
                    break;
                }
                width *= 2.0;
            }
            let (lo, hi) = if dir > 0.0 { (start, far) } else { (far, start) };
            let u = newton_bracketed(f, lo, hi, start, 50);
            if f(u).0 <= f(start).0 {
                u
            } else {
                start
            }
        })
        .collect()
}
