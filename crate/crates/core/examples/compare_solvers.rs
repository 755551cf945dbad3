//! Every solver on one scan, printed as a comparison table and written to
//! `table1.csv` with per-solver outputs. Defaults to a reduced 32 x 32
//! version of the desk experiment; pass a config file for the full one.
//!
//! ```text
//! cargo run --release --example compare_solvers [-- configs/desk.toml]
//! ```

use lapvard_ct::baselines::AmConfig;
use lapvard_ct::lapvard::LapVardConfig;
use lapvard_ct::runner::{reproduce_table1, ExperimentConfig, SeedConfig};
use lapvard_ct::{GridSpec, ScanGeometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let mut cfg = ExperimentConfig::desk_default();
            cfg.output_dir = "out/compare-small".into();
            cfg.grid = GridSpec::new(32, 8.0)?;
            cfg.geometry = ScanGeometry::new(48, 48, 7.6)?;
            cfg.lapvard_seed = Some(SeedConfig {
                image: None,
                am_iterations: Some(1000),
            });
            cfg.lapvard = Some(LapVardConfig {
                n_outer: 300,
                ..cfg.lapvard.unwrap()
            });
            cfg.am = Some(AmConfig {
                n_iterations: 1000,
                ..Default::default()
            });
            cfg
        }
    };
    let table = reproduce_table1(&cfg)?;
    print!("{}", table.render());
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
