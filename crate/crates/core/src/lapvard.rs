//! Laplace-prior variational automatic relevance determination.
//!
//! Each wavelet coefficient `β_k` has prior `Laplace(0, γ_k)` and an
//! approximate posterior `Laplace(μ_k, b_k)`. The free variational energy
//!
//! ```text
//! F(γ, μ, b) = Σ_i I_i exp(-(Φμ)_i) Π_k 1/(1 - (b_k φ_ik)²)
//!            + Σ_i y_i (Φμ)_i
//!            + Σ_k (b_k e^{-|μ_k|/b_k} + |μ_k|) / γ_k
//!            + Σ_k ln(2γ_k) - Σ_k ln(2b_k)
//! ```
//!
//! is minimized block-wise: `μ` through a separable exponential surrogate,
//! `b` through a convex-decomposition surrogate, and `γ` in closed form.
//! Every block is a majorize-minimize step, so `F` never increases.
//!
//! The MGF product is finite only while `b_k |φ_ik| < 1`; the `b` update
//! keeps `b_k ≤ (1 - δ) / max_i |φ_ik|`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::projector::SystemMatrix;
use crate::report::SolveReport;
use crate::scalar::newton_bracketed;
use crate::transmission::{Sinogram, LINE_INTEGRAL_CLAMP};

/// Posterior location `μ`, posterior scale `b` and prior scale `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub mu: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl VariationalState {
    pub fn new(mu: Vec<f64>, b: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        check_len("posterior scale b", mu.len(), b.len())?;
        check_len("prior scale gamma", mu.len(), gamma.len())?;
        if let Some(k) = mu.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("mu[{k}]")));
        }
        if let Some(k) = b.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("b[{k}] = {} must be positive", b[k])));
        }
        if let Some(k) = gamma.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "gamma[{k}] = {} must be positive",
                gamma[k]
            )));
        }
        Ok(VariationalState { mu, b, gamma })
    }

    /// State with the given `μ`, uniform `b`, and `γ` at its optimum.
    pub fn with_uniform_scale(mu: Vec<f64>, b_scale: f64) -> Result<Self> {
        let b = vec![b_scale; mu.len()];
        let gamma = mu
            .iter()
            .map(|&m| optimal_gamma(m, b_scale))
            .collect();
        Self::new(mu, b, gamma)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// First `(ray, coeff)` where `b_k |φ_ik| >= 1`, if any.
    pub fn domain_violation(&self, phi: &SystemMatrix) -> Option<(usize, usize, f64)> {
        let max_abs = phi.max_abs_per_col();
        (0..phi.n_cols()).find_map(|k| {
            if self.b[k] * max_abs[k] < 1.0 {
                return None;
            }
            let (rows, vals) = phi.column(k);
            rows.iter()
                .zip(vals)
                .map(|(&i, &v)| (i, k, self.b[k] * v.abs()))
                .find(|&(_, _, x)| !(x < 1.0))
        })
    }

    fn check_domain(&self, phi: &SystemMatrix) -> Result<()> {
        check_len("variational state", phi.n_cols(), self.len())?;
        match self.domain_violation(phi) {
            Some((ray, coeff, value)) => Err(Error::Domain { ray, coeff, value }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMuMode {
    #[default]
    Zeros,
    /// Wavelet coefficients of a seed image supplied by the caller.
    FromImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LapVardConfig {
    pub n_outer: usize,
    pub newton_steps_mu: usize,
    pub newton_steps_b: usize,
    /// `δ` in `b_k ≤ (1 - δ) / max_i |φ_ik|`.
    pub b_domain_margin: f64,
    pub init_mu_mode: InitMuMode,
    pub init_b_scale: f64,
    /// Stop when the relative FVE change over one outer iteration drops
    /// below this. Zero disables early stopping.
    pub tol_fve: f64,
}

impl Default for LapVardConfig {
    fn default() -> Self {
        LapVardConfig {
            n_outer: 50,
            newton_steps_mu: 20,
            newton_steps_b: 20,
            b_domain_margin: 1e-3,
            init_mu_mode: InitMuMode::Zeros,
            init_b_scale: 1e-3,
            tol_fve: 0.0,
        }
    }
}

impl LapVardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.newton_steps_mu == 0 || self.newton_steps_b == 0 {
            return Err(Error::InvalidParameter("Newton step caps must be positive".into()));
        }
        if !(self.b_domain_margin > 0.0 && self.b_domain_margin < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "b_domain_margin must lie in (0, 1), got {}",
                self.b_domain_margin
            )));
        }
        if !(self.init_b_scale > 0.0 && self.init_b_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "init_b_scale must be positive, got {}",
                self.init_b_scale
            )));
        }
        if !(self.tol_fve >= 0.0) {
            return Err(Error::InvalidParameter("tol_fve must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `E_q|β| = b e^{-|μ|/b} + |μ|` for `β ~ Laplace(μ, b)`.
fn expected_abs(mu: f64, b: f64) -> f64 {
    b * (-mu.abs() / b).exp() + mu.abs()
}

fn optimal_gamma(mu: f64, b: f64) -> f64 {
    expected_abs(mu, b)
}

/// `KL(Laplace(μ, b) ‖ Laplace(0, γ))`.
pub fn laplace_kl(mu: f64, b: f64, gamma: f64) -> Result<f64> {
    if !(b > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Laplace scales must be positive, got b = {b}, gamma = {gamma}"
        )));
    }
    Ok((gamma / b).ln() + expected_abs(mu, b) / gamma - 1.0)
}

/// Closed-form `γ_k = b_k e^{-|μ_k|/b_k} + |μ_k|`.
pub fn update_gamma(state: &VariationalState) -> Vec<f64> {
    state
        .mu
        .iter()
        .zip(&state.b)
        .map(|(&m, &b)| optimal_gamma(m, b))
        .collect()
}

/// Per-ray `Σ_k -ln(1 - (b_k φ_ik)²)`.
fn log_mgf_products(phi: &SystemMatrix, b: &[f64]) -> Vec<f64> {
    (0..phi.n_rays())
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = phi.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&k, &v)| {
                    let x = b[k] * v;
                    -(-x * x).ln_1p()
                })
                .sum()
        })
        .collect()
}

fn clamp_line(l: f64) -> f64 {
    l.clamp(-LINE_INTEGRAL_CLAMP, LINE_INTEGRAL_CLAMP)
}

/// `E_q[q_i(β)] = I_i exp(-(Φμ)_i) Π_k 1/(1 - (b_k φ_ik)²)`.
pub fn expected_mean_counts(
    phi: &SystemMatrix,
    intensities: &[f64],
    state: &VariationalState,
) -> Result<Vec<f64>> {
    check_len("air scan", phi.n_rays(), intensities.len())?;
    state.check_domain(phi)?;
    let line = phi.forward(&state.mu)?;
    let log_m = log_mgf_products(phi, &state.b);
    Ok(expected_counts_from(intensities, &line, &log_m))
}

fn expected_counts_from(intensities: &[f64], line: &[f64], log_m: &[f64]) -> Vec<f64> {
    intensities
        .iter()
        .zip(line)
        .zip(log_m)
        .map(|((&intensity, &l), &lm)| intensity * (lm - clamp_line(l)).exp())
        .collect()
}

fn prior_entropy_terms(state: &VariationalState) -> f64 {
    state
        .mu
        .iter()
        .zip(&state.b)
        .zip(&state.gamma)
        .map(|((&m, &b), &g)| expected_abs(m, b) / g + (2.0 * g).ln() - (2.0 * b).ln())
        .sum()
}

/// The free variational energy `F(γ, μ, b)`.
pub fn free_variational_energy(
    phi: &SystemMatrix,
    sino: &Sinogram,
    state: &VariationalState,
) -> Result<f64> {
    check_len("sinogram", phi.n_rays(), sino.n_rays())?;
    state.check_domain(phi)?;
    let line = phi.forward(&state.mu)?;
    let log_m = log_mgf_products(phi, &state.b);
    let expected = expected_counts_from(sino.air_scan(), &line, &log_m);
    let data: f64 = expected
        .iter()
        .zip(&line)
        .zip(sino.counts())
        .map(|((&e, &l), &y)| e + y * l)
        .sum();
    Ok(data + prior_entropy_terms(state))
}

/// `E_q[-log p(y|β)]`, the expected Poisson negative log-likelihood.
pub fn expected_neg_log_likelihood(
    phi: &SystemMatrix,
    sino: &Sinogram,
    state: &VariationalState,
) -> Result<f64> {
    let expected = expected_mean_counts(phi, sino.air_scan(), state)?;
    let line = phi.forward(&state.mu)?;
    Ok(expected
        .iter()
        .zip(&line)
        .zip(sino.counts().iter().zip(sino.air_scan()))
        .map(|((&e, &l), (&y, &intensity))| e + y * l - if y > 0.0 { y * intensity.ln() } else { 0.0 })
        .sum())
}

/// Terms of `F` that depend on `μ` (for fixed `b`, `γ`), evaluated at `mu`.
pub fn mu_objective(
    phi: &SystemMatrix,
    sino: &Sinogram,
    state: &VariationalState,
    mu: &[f64],
) -> Result<f64> {
    let probe = VariationalState {
        mu: mu.to_vec(),
        b: state.b.clone(),
        gamma: state.gamma.clone(),
    };
    let expected = expected_mean_counts(phi, sino.air_scan(), &probe)?;
    let line = phi.forward(mu)?;
    let data: f64 = expected
        .iter()
        .zip(&line)
        .zip(sino.counts())
        .map(|((&e, &l), &y)| e + y * l)
        .sum();
    let prior: f64 = mu
        .iter()
        .zip(&state.b)
        .zip(&state.gamma)
        .map(|((&m, &b), &g)| expected_abs(m, b) / g)
        .sum();
    Ok(data + prior)
}

/// Terms of `F` that depend on `b` (for fixed `μ`, `γ`), evaluated at `b`.
pub fn b_objective(
    phi: &SystemMatrix,
    sino: &Sinogram,
    state: &VariationalState,
    b: &[f64],
) -> Result<f64> {
    let probe = VariationalState {
        mu: state.mu.clone(),
        b: b.to_vec(),
        gamma: state.gamma.clone(),
    };
    let expected = expected_mean_counts(phi, sino.air_scan(), &probe)?;
    let prior: f64 = state
        .mu
        .iter()
        .zip(b)
        .zip(&state.gamma)
        .map(|((&m, &bk), &g)| bk * (-m.abs() / bk).exp() / g - (2.0 * bk).ln())
        .sum();
    Ok(expected.iter().sum::<f64>() + prior)
}

/// Separable surrogate for the `μ` block.
///
/// With `d_k = μ_k - μ̂_k` and `α_ik = |φ_ik| / Z₁`, Jensen's inequality on
/// the exponential gives, per coefficient,
///
/// ```text
/// g_k(μ_k) = b^y_k μ_k + θ⁺_k e^{-Z₁ d_k} + θ⁻_k e^{Z₁ d_k} + E_q|β_k| / γ_k
/// ```
///
/// and `G(μ) = Σ_k g_k(μ_k) + offset` majorizes the `μ` terms of `F`, with
/// equality at `μ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuSurrogateTerms {
    /// `Φᵀy`.
    pub b_y: Vec<f64>,
    pub theta_plus: Vec<f64>,
    pub theta_minus: Vec<f64>,
    /// `max_i Σ_k |φ_ik|`.
    pub z1: f64,
    pub expansion_point: Vec<f64>,
    /// `Σ_i E_i (1 - Σ_k α_ik)`, the part of the bound that does not move.
    pub offset: f64,
}

pub fn build_mu_surrogate(
    phi: &SystemMatrix,
    sino: &Sinogram,
    state: &VariationalState,
    expansion_point: &[f64],
) -> Result<MuSurrogateTerms> {
    check_len("sinogram", phi.n_rays(), sino.n_rays())?;
    check_len("expansion point", phi.n_cols(), expansion_point.len())?;
    if let Some(k) = expansion_point.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("expansion point [{k}]")));
    }
    state.check_domain(phi)?;
    let line = phi.forward(expansion_point)?;
    let log_m = log_mgf_products(phi, &state.b);
    let expected = expected_counts_from(sino.air_scan(), &line, &log_m);
    let b_y = phi.back(sino.counts())?;
    let z1 = phi.row_abs_sums().iter().copied().fold(0.0, f64::max);
    let inv_z1 = if z1 > 0.0 { 1.0 / z1 } else { 0.0 };

    let (theta_plus, theta_minus): (Vec<f64>, Vec<f64>) = (0..phi.n_cols())
        .into_par_iter()
        .map(|k| {
            let (rows, vals) = phi.column(k);
            let (mut plus, mut minus) = (0.0, 0.0);
            for (&i, &v) in rows.iter().zip(vals) {
                let w = expected[i] * v.abs() * inv_z1;
                if v >= 0.0 {
                    plus += w;
                } else {
                    minus += w;
                }
            }
            (plus, minus)
        })
        .unzip();

    let offset = expected
        .iter()
        .zip(phi.row_abs_sums())
        .map(|(&e, &s)| e * (1.0 - s * inv_z1))
        .sum();

    Ok(MuSurrogateTerms {
        b_y,
        theta_plus,
        theta_minus,
        z1,
        expansion_point: expansion_point.to_vec(),
        offset,
    })
}

impl MuSurrogateTerms {
    fn exp_terms(&self, k: usize, mu: f64) -> (f64, f64) {
        let d = self.z1 * (mu - self.expansion_point[k]);
        let plus = if self.theta_plus[k] > 0.0 {
            self.theta_plus[k] * (-d).exp()
        } else {
            0.0
        };
        let minus = if self.theta_minus[k] > 0.0 {
            self.theta_minus[k] * d.exp()
        } else {
            0.0
        };
        (plus, minus)
    }

    /// `g_k` with first and second derivative at `mu`.
    pub fn coordinate(&self, k: usize, mu: f64, b: f64, gamma: f64) -> (f64, f64, f64) {
        let (plus, minus) = self.exp_terms(k, mu);
        let decay = (-mu.abs() / b).exp();
        let value = self.b_y[k] * mu + plus + minus + (b * decay + mu.abs()) / gamma;
        let d1 = self.b_y[k] - self.z1 * plus + self.z1 * minus + mu.signum() * (1.0 - decay) / gamma;
        let d2 = self.z1 * self.z1 * (plus + minus) + decay / (b * gamma);
        (value, d1, d2)
    }

    /// One-sided derivatives of `g_k` at `μ_k = 0`.
    pub fn one_sided_at_zero(&self, k: usize, b: f64, gamma: f64) -> (f64, f64) {
        let (plus, minus) = self.exp_terms(k, 0.0);
        let smooth = self.b_y[k] - self.z1 * plus + self.z1 * minus;
        // E|β|/γ has one-sided slopes ±(1 - e^{-|μ|/b})/γ, which vanish at
        // μ = 0: the expected absolute value smooths the kink of |β|.
        let prior_slope = |m: f64| (1.0 - (-m.abs() / b).exp()) / gamma;
        let kink = prior_slope(0.0);
        (smooth - kink, smooth + kink)
    }

    /// `G(μ)` for the given scales.
    pub fn value(&self, state: &VariationalState, mu: &[f64]) -> f64 {
        self.offset
            + (0..mu.len())
                .map(|k| self.coordinate(k, mu[k], state.b[k], state.gamma[k]).0)
                .sum::<f64>()
    }
}

/// Coordinatewise minimizer of the `μ` surrogate.
pub fn minimize_mu_surrogate(
    terms: &MuSurrogateTerms,
    state: &VariationalState,
    cfg: &LapVardConfig,
) -> Result<Vec<f64>> {
    check_len("mu surrogate", state.len(), terms.b_y.len())?;
    let out: Vec<f64> = (0..state.len())
        .into_par_iter()
        .map(|k| minimize_mu_coordinate(terms, k, state.b[k], state.gamma[k], cfg.newton_steps_mu))
        .collect();
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "mu update produced a non-finite value at coefficient {k}"
        )));
    }
    Ok(out)
}

fn minimize_mu_coordinate(terms: &MuSurrogateTerms, k: usize, b: f64, gamma: f64, steps: usize) -> f64 {
    let start = terms.expansion_point[k];
    let g = |m: f64| terms.coordinate(k, m, b, gamma);
    let (left, right) = terms.one_sided_at_zero(k, b, gamma);
    let candidate = if left <= 0.0 && right >= 0.0 {
        0.0
    } else {
        // Minimizer lies on the branch where the derivative at zero points.
        let dir = if right < 0.0 { 1.0 } else { -1.0 };
        let z_scale = if terms.z1 > 0.0 { 1.0 / terms.z1 } else { b };
        let mut width = start.abs().max(b).max(z_scale);
        let mut far = dir * width;
        let mut found = false;
        for _ in 0..200 {
            far = dir * width;
            if dir * g(far).1 > 0.0 {
                found = true;
                break;
            }
            width *= 2.0;
        }
        if !found {
            return start;
        }
        let (lo, hi) = if dir > 0.0 { (0.0, far) } else { (far, 0.0) };
        newton_bracketed(g, lo, hi, start, steps)
    };
    if g(candidate).0 <= g(start).0 {
        candidate
    } else {
        start
    }
}

/// Separable surrogate for the `b` block from the convex decomposition
/// `f(b) ≤ Σ_k r_ik f(b̂ + (b_k - b̂_k)/r_ik · e_k)` applied ray by ray.
///
/// Per-entry arrays are stored in the column-major order of `Φ`.
#[derive(Debug, Clone)]
pub struct BSurrogateTerms<'a> {
    phi: &'a SystemMatrix,
    /// `r_ik = |φ_ik| / Σ_k' |φ_ik'|`.
    pub r: Vec<f64>,
    /// `Q_ik(b̂) = Π_{j≠k} 1/(1 - (b̂_j φ_ij)²)`.
    pub q: Vec<f64>,
    /// `r_ik · I_i e^{-(Φμ)_i} · Q_ik`.
    weight: Vec<f64>,
    /// `φ_ik b̂_k`, the argument of the MGF factor at the anchor.
    x_anchor: Vec<f64>,
    /// `φ_ik / r_ik`, the slope of `φ_ik b̃_ik` in `b_k`.
    slope: Vec<f64>,
    pub anchor: Vec<f64>,
    /// `Σ_i I_i e^{-(Φμ)_i}` over rays with no entries.
    empty_rays: f64,
}

pub fn build_b_surrogate<'a>(
    phi: &'a SystemMatrix,
    sino: &Sinogram,
    state: &VariationalState,
    anchor: &[f64],
) -> Result<BSurrogateTerms<'a>> {
    check_len("sinogram", phi.n_rays(), sino.n_rays())?;
    let at_anchor = VariationalState {
        mu: state.mu.clone(),
        b: anchor.to_vec(),
        gamma: state.gamma.clone(),
    };
    at_anchor.check_domain(phi)?;
    let line = phi.forward(&state.mu)?;
    let row_sums = phi.row_abs_sums();
    let nnz = phi.nnz();
    let col_ptr = phi.col_ptr();
    // ln(1 - (b̂_k φ_ik)²) per entry, in column order, and its per-ray sums.
    let mut log_factor = vec![0.0; nnz];
    let mut log_m = vec![0.0; phi.n_rays()];
    for k in 0..phi.n_cols() {
        let (rows, vals) = phi.column(k);
        for (offset, (&i, &v)) in rows.iter().zip(vals).enumerate() {
            let x = anchor[k] * v;
            let t = (-x * x).ln_1p();
            log_factor[col_ptr[k] + offset] = t;
            log_m[i] -= t;
        }
    }
    let c: Vec<f64> = sino
        .air_scan()
        .iter()
        .zip(&line)
        .map(|(&intensity, &l)| intensity * (-clamp_line(l)).exp())
        .collect();
    let mut r = vec![0.0; nnz];
    let mut q = vec![0.0; nnz];
    let mut weight = vec![0.0; nnz];
    let mut x_anchor = vec![0.0; nnz];
    let mut slope = vec![0.0; nnz];
    for k in 0..phi.n_cols() {
        let (rows, vals) = phi.column(k);
        for (offset, (&i, &v)) in rows.iter().zip(vals).enumerate() {
            let p = col_ptr[k] + offset;
            r[p] = v.abs() / row_sums[i];
            q[p] = (log_m[i] + log_factor[p]).exp();
            weight[p] = r[p] * c[i] * q[p];
            x_anchor[p] = v * anchor[k];
            slope[p] = v.signum() * row_sums[i];
        }
    }
    let empty_rays = (0..phi.n_rays())
        .filter(|&i| phi.row(i).0.is_empty())
        .map(|i| c[i])
        .sum();
    Ok(BSurrogateTerms {
        phi,
        r,
        q,
        weight,
        x_anchor,
        slope,
        anchor: anchor.to_vec(),
        empty_rays,
    })
}

impl BSurrogateTerms<'_> {
    /// Open interval of `b_k` where every decomposed term stays finite.
    pub fn feasible_interval(&self, k: usize) -> (f64, f64) {
        let (rows, _) = self.phi.column(k);
        let base = self.phi.col_ptr()[k];
        let row_sums = self.phi.row_abs_sums();
        let anchor = self.anchor[k];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for (offset, &i) in rows.iter().enumerate() {
            let r = self.r[base + offset];
            // |φ_ik b̃_ik| < 1 with r_ik/|φ_ik| = 1/S_i.
            let reach = 1.0 / row_sums[i];
            hi = hi.min(anchor * (1.0 - r) + reach);
            lo = lo.max(anchor * (1.0 - r) - reach);
        }
        (lo, hi)
    }

    /// `g_k(b)` with first and second derivative.
    pub fn coordinate(&self, k: usize, b: f64, mu: f64, gamma: f64) -> (f64, f64, f64) {
        let range = self.phi.col_ptr()[k]..self.phi.col_ptr()[k + 1];
        let step = b - self.anchor[k];
        let (mut value, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for ((&a, &x0), &dx) in self.weight[range.clone()]
            .iter()
            .zip(&self.x_anchor[range.clone()])
            .zip(&self.slope[range])
        {
            let x = x0 + step * dx;
            let s = 1.0 - x * x;
            if !(s > 0.0) {
                return (f64::INFINITY, f64::INFINITY.copysign(x * dx), f64::INFINITY);
            }
            let inv = 1.0 / s;
            let a_inv = a * inv;
            value += a_inv;
            d1 += 2.0 * a_inv * inv * x * dx;
            d2 += a_inv * inv * inv * (2.0 + 6.0 * x * x) * dx * dx;
        }
        let c = mu.abs();
        let decay = (-c / b).exp();
        value += b * decay / gamma - (2.0 * b).ln();
        d1 += decay * (1.0 + c / b) / gamma - 1.0 / b;
        d2 += decay * c * c / (b * b * b) / gamma + 1.0 / (b * b);
        (value, d1, d2)
    }

    /// Surrogate value `G(b)` for the `b` terms of `F`.
    pub fn value(&self, state: &VariationalState, b: &[f64]) -> f64 {
        self.empty_rays
            + (0..b.len())
                .map(|k| self.coordinate(k, b[k], state.mu[k], state.gamma[k]).0)
                .sum::<f64>()
    }
}

/// Diagnostics from one `b` block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BUpdateStats {
    /// Coefficients no ray sees, whose scale was capped.
    pub unconstrained_capped: usize,
    /// Coefficients that ended on the domain box.
    pub at_box: usize,
}

/// Coordinatewise minimizer of the `b` surrogate inside the domain box.
pub fn minimize_b_surrogate(
    terms: &BSurrogateTerms<'_>,
    state: &VariationalState,
    cfg: &LapVardConfig,
) -> Result<Vec<f64>> {
    minimize_b_surrogate_with_stats(terms, state, cfg).map(|(b, _)| b)
}

pub fn minimize_b_surrogate_with_stats(
    terms: &BSurrogateTerms<'_>,
    state: &VariationalState,
    cfg: &LapVardConfig,
) -> Result<(Vec<f64>, BUpdateStats)> {
    check_len("b surrogate", state.len(), terms.anchor.len())?;
    let cap = cfg.init_b_scale * 1e6;
    let max_abs = terms.phi.max_abs_per_col();
    let results: Vec<(f64, u8)> = (0..state.len())
        .into_par_iter()
        .map(|k| {
            let (mu, gamma) = (state.mu[k], state.gamma[k]);
            let g = |b: f64| terms.coordinate(k, b, mu, gamma);
            let start = terms.anchor[k];
            let (lo, sur_hi) = terms.feasible_interval(k);
            let (box_hi, unconstrained) = if max_abs[k] > 0.0 {
                ((1.0 - cfg.b_domain_margin) / max_abs[k], false)
            } else {
                (cap, true)
            };
            let (value, tag) = if box_hi < sur_hi && g(box_hi).1 <= 0.0 {
                (box_hi, if unconstrained { 1 } else { 2 })
            } else {
                let hi = box_hi.min(sur_hi);
                (newton_bracketed(g, lo, hi, start, cfg.newton_steps_b), 0)
            };
            let chosen = if value > 0.0 && value <= box_hi && g(value).0 <= g(start).0 {
                value
            } else {
                start.min(box_hi)
            };
            (chosen, tag)
        })
        .collect();
    let mut stats = BUpdateStats::default();
    let mut out = Vec::with_capacity(results.len());
    for (b, tag) in results {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::NonFinite(format!("b update produced {b}")));
        }
        match tag {
            1 => stats.unconstrained_capped += 1,
            2 => stats.at_box += 1,
            _ => {}
        }
        out.push(b);
    }
    Ok((out, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Init,
    Mu,
    B,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockRecord {
    pub iteration: usize,
    pub block: Block,
    pub fve: f64,
}

#[derive(Debug, Clone)]
pub struct LapVardRun {
    pub state: VariationalState,
    /// One row per outer iteration (FVE after the `γ` update).
    pub report: SolveReport,
    /// FVE after every block.
    pub trace: Vec<BlockRecord>,
}

impl LapVardRun {
    pub fn fve_trace(&self) -> impl Iterator<Item = f64> + '_ {
        self.trace.iter().map(|r| r.fve)
    }
}

/// Runs the outer loop `μ → b → γ` for `cfg.n_outer` iterations.
///
/// `seed_mu` provides the initial coefficients when `cfg.init_mu_mode` is
/// [`InitMuMode::FromImage`].
pub fn run_lapvard(
    phi: &SystemMatrix,
    sino: &Sinogram,
    cfg: &LapVardConfig,
    seed_mu: Option<&[f64]>,
) -> Result<LapVardRun> {
    cfg.validate()?;
    check_len("sinogram", phi.n_rays(), sino.n_rays())?;
    let started = Instant::now();
    let n = phi.n_cols();
    let mu = match (cfg.init_mu_mode, seed_mu) {
        (InitMuMode::Zeros, _) => vec![0.0; n],
        (InitMuMode::FromImage, Some(seed)) => {
            check_len("seed coefficients", n, seed.len())?;
            seed.to_vec()
        }
        (InitMuMode::FromImage, None) => {
            return Err(Error::InvalidParameter(
                "init_mu_mode = from-image needs seed coefficients".into(),
            ))
        }
    };
    let b: Vec<f64> = phi
        .max_abs_per_col()
        .iter()
        .map(|&m| {
            if m > 0.0 {
                cfg.init_b_scale.min((1.0 - cfg.b_domain_margin) / m)
            } else {
                cfg.init_b_scale
            }
        })
        .collect();
    let gamma = mu.iter().zip(&b).map(|(&m, &bk)| optimal_gamma(m, bk)).collect();
    let mut state = VariationalState::new(mu, b, gamma)?;

    let mut report = SolveReport::new("lapvard");
    let mut trace = Vec::new();
    let elapsed = |t: &Instant| t.elapsed().as_secs_f64() * 1e3;
    let fve0 = free_variational_energy(phi, sino, &state)?;
    trace.push(BlockRecord {
        iteration: 0,
        block: Block::Init,
        fve: fve0,
    });
    report.push(0, fve0, elapsed(&started));
    let (_, clamps) = crate::transmission::mean_counts_with_clamps(phi, sino.air_scan(), &state.mu)?;
    report.clamps += clamps;

    let mut prev = fve0;
    let mut capped_total = 0usize;
    for it in 1..=cfg.n_outer {
        let ctx = |e: Error, what: &str| e.context(format!("lapvard iteration {it}, {what} block"));

        let mu_terms = build_mu_surrogate(phi, sino, &state, &state.mu).map_err(|e| ctx(e, "mu"))?;
        state.mu = minimize_mu_surrogate(&mu_terms, &state, cfg).map_err(|e| ctx(e, "mu"))?;
        let f_mu = free_variational_energy(phi, sino, &state).map_err(|e| ctx(e, "mu"))?;
        trace.push(BlockRecord {
            iteration: it,
            block: Block::Mu,
            fve: f_mu,
        });

        let b_terms = build_b_surrogate(phi, sino, &state, &state.b).map_err(|e| ctx(e, "b"))?;
        let (b, stats) = minimize_b_surrogate_with_stats(&b_terms, &state, cfg).map_err(|e| ctx(e, "b"))?;
        state.b = b;
        capped_total += stats.unconstrained_capped;
        let f_b = free_variational_energy(phi, sino, &state).map_err(|e| ctx(e, "b"))?;
        trace.push(BlockRecord {
            iteration: it,
            block: Block::B,
            fve: f_b,
        });

        state.gamma = update_gamma(&state);
        let f_gamma = free_variational_energy(phi, sino, &state).map_err(|e| ctx(e, "gamma"))?;
        trace.push(BlockRecord {
            iteration: it,
            block: Block::Gamma,
            fve: f_gamma,
        });
        report.push(it, f_gamma, elapsed(&started));
        let (_, clamps) = crate::transmission::mean_counts_with_clamps(phi, sino.air_scan(), &state.mu)?;
        report.clamps += clamps;

        let change = (prev - f_gamma).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = f_gamma;
        if cfg.tol_fve > 0.0 && change < cfg.tol_fve {
            report.early_stop = true;
            break;
        }
    }
    if capped_total > 0 {
        report.diagnostics.push(format!(
            "{capped_total} coefficient updates had no ray support; b capped at {:e}",
            cfg.init_b_scale * 1e6
        ));
    }
    Ok(LapVardRun {
        state,
        report,
        trace,
    })
}
