//! Builds a parallel-beam system matrix, checks `<Hx, r> = <x, Hᵀr>`, and
//! optionally dumps it as `row col value` triplets.
//!
//! ```text
//! cargo run --release --example projector_adjoint [-- triplets.txt]
//! ```

use std::fs::File;
use std::io::BufWriter;

use lapvard_ct::projector::{build_parallel_beam, chord_length};
use lapvard_ct::{GridSpec, ScanGeometry};
use rand::{Rng, SeedableRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::new(32, 2.0)?;
    let geom = ScanGeometry::new(48, 48, 64.0 * 2f64.sqrt() / 48.0)?;
    let h = build_parallel_beam(&grid, &geom)?;
    println!(
        "{} rays x {} pixels, {} nonzeros ({:.2}% dense)",
        h.n_rays(),
        h.n_cols(),
        h.nnz(),
        100.0 * h.nnz() as f64 / (h.n_rays() * h.n_cols()) as f64
    );

    let central = geom.n_detectors / 2;
    let ray = geom.ray(central);
    println!(
        "ray {central}: angle {:.3} rad, offset {:.2} mm, chord {:.3} mm, row sum {:.3} mm",
        ray.angle,
        ray.offset,
        chord_length(&grid, &ray),
        h.row_abs_sums()[central]
    );

    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..h.n_cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..h.n_rays()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hx = h.forward(&x)?;
        let htr = h.back(&r)?;
        let lhs: f64 = hx.iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&htr).map(|(a, b)| a * b).sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    println!("worst relative adjoint defect over 20 pairs: {worst:.2e}");

    if let Some(path) = std::env::args().nth(1) {
        h.write_triplets(BufWriter::new(File::create(&path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}
