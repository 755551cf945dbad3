//! Rasterizes the head phantom, simulates a noisy scan and writes
//! `truth.*` and `sinogram.*` (raw f32 + header + PGM preview).
//!
//! ```text
//! cargo run --release --example simulate_scan [-- out/scan]
//! ```

use std::path::PathBuf;

use lapvard_ct::runner::{self, ExperimentConfig, Scan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "out/scan".into());
    let cfg = ExperimentConfig::desk_default();
    let scan = Scan::simulate(&cfg)?;
    let counts = scan.sinogram.counts();
    let (lo, hi) = counts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    println!(
        "{} rays, counts {lo} to {hi}, air scan {:e}, peak attenuation {} mm^-1",
        counts.len(),
        cfg.noise.intensity,
        scan.truth.max()
    );
    for path in runner::simulate_artifacts(&scan).write_all(&out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
