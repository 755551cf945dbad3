//! Synthetic phantoms and Poisson count simulation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_len, Error, Result};
use crate::projector::{GridSpec, SystemMatrix};
use crate::transmission::{mean_counts, Image, Sinogram};

/// Ellipse in grid units: pixels from the grid center, `x` right, `y` up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Counter-clockwise rotation in degrees.
    #[serde(default)]
    pub angle_deg: f64,
    /// Added to every pixel whose center lies inside, mm⁻¹.
    pub value: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        let u = (dx * c + dy * s) / self.semi_x;
        let v = (-dx * s + dy * c) / self.semi_y;
        u * u + v * v <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EllipsePhantomSpec {
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub ellipses: Vec<Ellipse>,
}

impl EllipsePhantomSpec {
    pub fn validate(&self) -> Result<()> {
        for (n, e) in self.ellipses.iter().enumerate() {
            if !(e.semi_x > 0.0 && e.semi_y > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "ellipse {n} needs positive semi-axes, got {} x {}",
                    e.semi_x, e.semi_y
                )));
            }
        }
        Ok(())
    }

    /// Head-like phantom for a `side × side` grid: a 0.04 mm⁻¹ shell around
    /// 0.02 mm⁻¹ tissue with ±5% low-contrast inserts and one dense insert.
    pub fn desk_head(side: usize) -> Self {
        let r = side as f64 / 2.0;
        let e = |cx: f64, cy: f64, ax: f64, ay: f64, angle_deg: f64, value: f64| Ellipse {
            center_x: cx * r,
            center_y: cy * r,
            semi_x: ax * r,
            semi_y: ay * r,
            angle_deg,
            value,
        };
        EllipsePhantomSpec {
            background: 0.0,
            ellipses: vec![
                e(0.0, 0.0, 0.72, 0.90, 0.0, 0.04),
                e(0.0, -0.02, 0.64, 0.82, 0.0, -0.02),
                e(-0.24, 0.12, 0.13, 0.24, 18.0, 0.001),
                e(0.24, 0.12, 0.11, 0.20, -18.0, -0.001),
                e(0.0, 0.48, 0.12, 0.12, 0.0, 0.001),
                e(0.0, -0.40, 0.20, 0.08, 0.0, -0.001),
                e(0.30, -0.38, 0.07, 0.07, 0.0, 0.01),
                e(-0.30, -0.30, 0.05, 0.05, 0.0, 0.01),
            ],
        }
    }
}

/// Background plus the values of all ellipses containing each pixel center.
pub fn rasterize_phantom(spec: &EllipsePhantomSpec, grid: &GridSpec) -> Result<Image> {
    spec.validate()?;
    grid.validate()?;
    let n = grid.n_pixels_per_side;
    let half = n as f64 / 2.0;
    let pixels: Vec<f64> = (0..n * n)
        .map(|j| {
            let (row, col) = (j / n, j % n);
            let x = col as f64 + 0.5 - half;
            let y = half - row as f64 - 0.5;
            spec.background
                + spec
                    .ellipses
                    .iter()
                    .filter(|e| e.contains(x, y))
                    .map(|e| e.value)
                    .sum::<f64>()
        })
        .collect();
    if let Some(j) = pixels.iter().position(|&p| p < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "phantom attenuation is negative ({}) at pixel {j}",
            pixels[j]
        )));
    }
    Image::new(n, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub seed: u64,
    /// Air-scan photon count per ray.
    pub intensity: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            seed: 1,
            intensity: 1e5,
        }
    }
}

/// Independent generator for one ray: ChaCha8 keyed by `seed`, on stream `ray`.
pub fn ray_rng(seed: u64, ray: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray);
    rng
}

/// Uniform on the open interval `(0, 1)`.
fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Means at or below this use inversion.
const INVERSION_CUTOFF: f64 = 10.0;
/// Means above this use a rounded normal approximation.
const NORMAL_CUTOFF: f64 = 1e6;

/// One Poisson draw.
///
/// Sequential inversion for small means, Hörmann's transformed rejection
/// (PTRS) up to `1e6`, and a normal approximation beyond.
pub fn sample_poisson(mean: f64, rng: &mut impl RngCore) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    if mean < INVERSION_CUTOFF {
        let u = open_uniform(rng);
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u32;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / f64::from(k);
            cdf += p;
        }
        return f64::from(k);
    }
    if mean > NORMAL_CUTOFF {
        let (u1, u2) = (open_uniform(rng), open_uniform(rng));
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        return (mean + mean.sqrt() * z).round().max(0.0);
    }
    let smu = mean.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_mean = mean.ln();
    loop {
        let u = open_uniform(rng) - 0.5;
        let v = open_uniform(rng);
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        if lhs <= -mean + k * log_mean - ln_gamma(k + 1.0) {
            return k;
        }
    }
}

/// Poisson counts with means `I exp(-(H u)_i)`; ray `i` draws from
/// [`ray_rng`]`(seed, i)` so the result does not depend on scheduling.
pub fn simulate_counts(h: &SystemMatrix, img: &Image, noise: &NoiseSpec) -> Result<Sinogram> {
    check_len("phantom", h.n_cols(), img.pixels().len())?;
    if !(noise.intensity > 0.0 && noise.intensity.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "intensity must be positive, got {}",
            noise.intensity
        )));
    }
    let air = vec![noise.intensity; h.n_rays()];
    let q = mean_counts(h, &air, img.pixels())?;
    let counts = q
        .par_iter()
        .enumerate()
        .map(|(i, &mean)| sample_poisson(mean, &mut ray_rng(noise.seed, i as u64)))
        .collect();
    Sinogram::new(counts, air)
}

/// Noiseless counts equal to the means.
pub fn ideal_counts(h: &SystemMatrix, img: &Image, intensity: f64) -> Result<Sinogram> {
    let air = vec![intensity; h.n_rays()];
    let q = mean_counts(h, &air, img.pixels())?;
    Sinogram::new(q, air)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_zero() {
        let grid = GridSpec::new(8, 1.0).unwrap();
        let img = rasterize_phantom(&EllipsePhantomSpec::default(), &grid).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn covering_ellipse_is_constant() {
        let grid = GridSpec::new(16, 1.0).unwrap();
        let spec = EllipsePhantomSpec {
            background: 0.0,
            ellipses: vec![Ellipse {
                center_x: 0.0,
                center_y: 0.0,
                semi_x: 20.0,
                semi_y: 20.0,
                angle_deg: 0.0,
                value: 0.02,
            }],
        };
        let img = rasterize_phantom(&spec, &grid).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.02));
    }

    #[test]
    fn negative_attenuation_rejected() {
        let grid = GridSpec::new(4, 1.0).unwrap();
        let spec = EllipsePhantomSpec {
            background: 0.0,
            ellipses: vec![Ellipse {
                center_x: 0.0,
                center_y: 0.0,
                semi_x: 1.0,
                semi_y: 1.0,
                angle_deg: 0.0,
                value: -0.01,
            }],
        };
        assert!(rasterize_phantom(&spec, &grid).is_err());
        let bad = EllipsePhantomSpec {
            background: 0.0,
            ellipses: vec![Ellipse {
                semi_x: 0.0,
                ..spec.ellipses[0]
            }],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn desk_head_peak_and_inserts() {
        let grid = GridSpec::new(64, 4.0).unwrap();
        let img = rasterize_phantom(&EllipsePhantomSpec::desk_head(64), &grid).unwrap();
        assert!((img.max() - 0.04).abs() < 1e-12);
        assert!(img.min() >= 0.0);
        let has = |v: f64| img.pixels().iter().any(|&p| (p - v).abs() < 1e-12);
        assert!(has(0.02) && has(0.021) && has(0.019) && has(0.03));
    }

    #[test]
    fn small_mean_inversion_moments() {
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|s| sample_poisson(3.0, &mut ray_rng(s, 0))).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 3.0).abs() < 4.0 * (3.0 / n as f64).sqrt());
        assert!((var / mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_mean_draws_zero() {
        assert_eq!(sample_poisson(0.0, &mut ray_rng(1, 1)), 0.0);
    }
}
