//! Evaluates the Poisson transmission negative log-likelihood at the true
//! image and nearby, and compares its gradient against central differences.
//!
//! ```text
//! cargo run --release --example transmission_likelihood
//! ```

use lapvard_ct::projector::build_parallel_beam;
use lapvard_ct::simkit::{rasterize_phantom, simulate_counts, EllipsePhantomSpec, NoiseSpec};
use lapvard_ct::transmission::{mean_counts, neg_log_likelihood, nll_gradient};
use lapvard_ct::{GridSpec, ScanGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::new(32, 4.0)?;
    let geom = ScanGeometry::new(48, 48, 3.8)?;
    let h = build_parallel_beam(&grid, &geom)?;
    let truth = rasterize_phantom(&EllipsePhantomSpec::desk_head(32), &grid)?;
    let sino = simulate_counts(&h, &truth, &NoiseSpec::default())?;
    let nll = |x: &[f64]| -> lapvard_ct::Result<f64> { neg_log_likelihood(&sino, &mean_counts(&h, sino.air_scan(), x)?) };

    let x = truth.pixels().to_vec();
    println!("NLL at truth: {:.6e}", nll(&x)?);
    for scale in [0.9, 1.1] {
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        println!("NLL at {scale} x truth: {:.6e}", nll(&scaled)?);
    }

    let g = nll_gradient(&h, &sino, &x)?;
    let step = 1e-6;
    for j in [0, 32 * 16 + 16, 32 * 10 + 20] {
        let (mut plus, mut minus) = (x.clone(), x.clone());
        plus[j] += step;
        minus[j] -= step;
        let fd = (nll(&plus)? - nll(&minus)?) / (2.0 * step);
        println!("pixel {j}: gradient {:+.6e}, central difference {fd:+.6e}", g[j]);
    }
    Ok(())
}
