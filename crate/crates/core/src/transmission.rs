//! Poisson transmission likelihood.
//!
//! Ray `i` records `y_i ~ Poisson(q_i)` photons, with mean
//! `q_i = I_i · exp(-(A x)_i)` for air-scan intensity `I_i` and line integral
//! `(A x)_i`. The negative log-likelihood drops the `log y_i!` constant.

use crate::error::{check_len, Error, Result};
use crate::projector::SystemMatrix;

/// Line integrals are clamped to this magnitude before exponentiation.
pub const LINE_INTEGRAL_CLAMP: f64 = 700.0;

/// Square attenuation map, row-major, in mm⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        check_len("image pixels", side * side, pixels.len())?;
        if let Some(j) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("image pixel {j}")));
        }
        Ok(Image { side, pixels })
    }

    pub fn zeros(side: usize) -> Self {
        Image {
            side,
            pixels: vec![0.0; side * side],
        }
    }

    pub fn constant(side: usize, value: f64) -> Self {
        Image {
            side,
            pixels: vec![value; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copy with negative pixels set to zero.
    pub fn clamped_nonnegative(&self) -> Image {
        Image {
            side: self.side,
            pixels: self.pixels.iter().map(|&p| p.max(0.0)).collect(),
        }
    }
}

/// Measured counts and air-scan intensities, one per ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    counts: Vec<f64>,
    air_scan: Vec<f64>,
}

impl Sinogram {
    pub fn new(counts: Vec<f64>, air_scan: Vec<f64>) -> Result<Self> {
        check_len("sinogram air scan", counts.len(), air_scan.len())?;
        if let Some(i) = counts.iter().position(|&y| !(y >= 0.0 && y.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "count at ray {i} must be finite and nonnegative, got {}",
                counts[i]
            )));
        }
        if let Some(i) = air_scan.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "air scan at ray {i} must be positive, got {}",
                air_scan[i]
            )));
        }
        Ok(Sinogram { counts, air_scan })
    }

    pub fn n_rays(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn air_scan(&self) -> &[f64] {
        &self.air_scan
    }
}

/// `q_i = I_i exp(-(A x)_i)`.
pub fn mean_counts(a: &SystemMatrix, intensities: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    mean_counts_with_clamps(a, intensities, x).map(|(q, _)| q)
}

/// Like [`mean_counts`], also returning how many line integrals were clamped.
pub fn mean_counts_with_clamps(
    a: &SystemMatrix,
    intensities: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, usize)> {
    check_len("air scan", a.n_rays(), intensities.len())?;
    let mut line = a.forward(x)?;
    let mut clamps = 0;
    for (l, &intensity) in line.iter_mut().zip(intensities) {
        if !l.is_finite() {
            return Err(Error::NonFinite("line integral".into()));
        }
        if l.abs() > LINE_INTEGRAL_CLAMP {
            clamps += 1;
        }
        *l = intensity * (-l.clamp(-LINE_INTEGRAL_CLAMP, LINE_INTEGRAL_CLAMP)).exp();
    }
    Ok((line, clamps))
}

/// `Σ_i [q_i - y_i log q_i]`.
pub fn neg_log_likelihood(sino: &Sinogram, q: &[f64]) -> Result<f64> {
    check_len("mean counts", sino.n_rays(), q.len())?;
    let mut total = 0.0;
    for (i, (&y, &qi)) in sino.counts().iter().zip(q).enumerate() {
        if !(qi > 0.0) {
            return Err(Error::NonPositiveMean { ray: i, value: qi });
        }
        total += qi;
        if y > 0.0 {
            total -= y * qi.ln();
        }
    }
    Ok(total)
}

/// Gradient of the negative log-likelihood in `x`: `Aᵀ(y - q(x))`.
pub fn nll_gradient(a: &SystemMatrix, sino: &Sinogram, x: &[f64]) -> Result<Vec<f64>> {
    let q = mean_counts(a, sino.air_scan(), x)?;
    let resid: Vec<f64> = sino.counts().iter().zip(&q).map(|(y, q)| y - q).collect();
    a.back(&resid)
}
