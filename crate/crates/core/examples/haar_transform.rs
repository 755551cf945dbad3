//! Multilevel Haar analysis of the head phantom: energy per subband, the
//! fraction of coefficients that carry 99.9% of the energy, and a
//! synthesis round trip.
//!
//! ```text
//! cargo run --release --example haar_transform
//! ```

use lapvard_ct::simkit::{rasterize_phantom, EllipsePhantomSpec};
use lapvard_ct::wavelet::DetailBlock;
use lapvard_ct::{GridSpec, WaveletBasis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let side = 64;
    let levels = 3;
    let grid = GridSpec::new(side, 4.0)?;
    let img = rasterize_phantom(&EllipsePhantomSpec::desk_head(side), &grid)?;
    let basis = WaveletBasis::new(side, levels)?;
    let coeffs = basis.analyze(&img)?;
    let c = coeffs.values();
    let total: f64 = c.iter().map(|v| v * v).sum();

    let energy = |range: std::ops::Range<usize>| c[range].iter().map(|v| v * v).sum::<f64>() / total;
    let approx_len = basis.block_offset(levels, DetailBlock::X);
    println!("approximation ({0}x{0}): {1:.6} of energy", side >> levels, energy(0..approx_len));
    for level in (1..=levels).rev() {
        let n = (side >> level) * (side >> level);
        for block in [DetailBlock::X, DetailBlock::Y, DetailBlock::XY] {
            let start = basis.block_offset(level, block);
            println!("level {level} {block:?}: {:.2e}", energy(start..start + n));
        }
    }

    let mut sorted: Vec<f64> = c.iter().map(|v| v * v).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let needed = sorted.iter().take_while(|&&e| {
        acc += e;
        acc < 0.999 * total
    });
    let needed = needed.count() + 1;
    println!(
        "{needed} of {} coefficients ({:.1}%) hold 99.9% of the energy",
        c.len(),
        100.0 * needed as f64 / c.len() as f64
    );

    let back = basis.synthesize(&coeffs)?;
    let err = img
        .pixels()
        .iter()
        .zip(back.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round-trip max error {err:.2e}");
    Ok(())
}
