//! The three alternating-minimization comparators on a 32 x 32 scan, with a
//! small penalty-weight sweep for the two penalized variants.
//!
//! ```text
//! cargo run --release --example am_baselines [-- n_iterations]
//! ```

use lapvard_ct::baselines::{run_am, AmConfig, PenaltyConfig};
use lapvard_ct::projector::build_parallel_beam;
use lapvard_ct::runner::{psnr, rmse};
use lapvard_ct::simkit::{rasterize_phantom, simulate_counts, EllipsePhantomSpec, NoiseSpec};
use lapvard_ct::{GridSpec, ScanGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_iterations: usize = std::env::args().nth(1).map_or(Ok(1000), |s| s.parse())?;
    let grid = GridSpec::new(32, 4.0)?;
    let geom = ScanGeometry::new(48, 48, 3.8)?;
    let h = build_parallel_beam(&grid, &geom)?;
    let truth = rasterize_phantom(&EllipsePhantomSpec::desk_head(32), &grid)?;
    let sino = simulate_counts(&h, &truth, &NoiseSpec::default())?;
    let cfg = AmConfig {
        n_iterations,
        ..Default::default()
    };

    let mut runs = vec![("am", PenaltyConfig::none())];
    for w in [1e2, 1e3, 1e4] {
        runs.push(("am-wavelet", PenaltyConfig::wavelet_l1(w, 3)));
    }
    for w in [1e3, 1e4, 1e5] {
        runs.push(("am-neighborhood", PenaltyConfig::neighborhood(w)));
    }
    println!("{:<16} {:>8} {:>12} {:>9} {:>14}", "method", "weight", "RMSE", "PSNR", "objective");
    for (name, penalty) in runs {
        let (img, report) = run_am(&h, &sino, &penalty, &cfg)?;
        println!(
            "{name:<16} {:>8.0e} {:>12.4e} {:>9.2} {:>14.6e}",
            penalty.weight,
            rmse(&img, &truth)?,
            psnr(&img, &truth, truth.max())?,
            report.final_objective().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
