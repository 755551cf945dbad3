use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lapvard_ct::runner::{self, ExperimentConfig, RawArray, Scan};

#[derive(Parser)]
#[command(version, about = "Poisson transmission CT reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). The built-in desk-scale experiment when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Noise seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the phantom and simulate a noisy scan.
    Simulate(Common),
    /// Simulate, reconstruct with the configured solver and write all outputs.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Use these counts (raw f32 sinogram) instead of simulating.
        #[arg(long)]
        sinogram: Option<PathBuf>,
    },
    /// RMSE and PSNR of a raw reconstruction against a raw ground truth.
    Metrics {
        reconstruction: PathBuf,
        truth: PathBuf,
        /// PSNR peak (default: ground-truth maximum).
        #[arg(long)]
        peak: Option<f64>,
    },
    /// Run every solver on one scan and print the comparison table.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(Common),
}

fn load(common: &Common) -> lapvard_ct::Result<ExperimentConfig> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| lapvard_ct::Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> lapvard_ct::Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = load(&common)?;
            let scan = Scan::simulate(&cfg)?;
            for path in runner::simulate_artifacts(&scan).write_all(&cfg.output_dir)? {
                println!("{}", path.display());
            }
        }
        Command::Reconstruct { common, sinogram } => {
            let cfg = load(&common)?;
            let mut scan = Scan::simulate(&cfg)?;
            if let Some(path) = sinogram {
                scan = scan.with_counts(RawArray::read(&path)?.values)?;
            }
            let report = runner::run_on_scan(&cfg, &scan)?;
            println!(
                "{}: {} iterations, RMSE {:.4e}, PSNR {:.2} dB -> {}",
                report.solver,
                report.rows.len().saturating_sub(1),
                report.rmse.unwrap_or(f64::NAN),
                report.psnr_db.unwrap_or(f64::NAN),
                cfg.output_dir.display()
            );
            for d in &report.diagnostics {
                eprintln!("note: {d}");
            }
        }
        Command::Metrics {
            reconstruction,
            truth,
            peak,
        } => {
            let rec = RawArray::read(&reconstruction)?.to_image()?;
            let truth = RawArray::read(&truth)?.to_image()?;
            let peak = peak.unwrap_or_else(|| truth.max());
            let err = runner::rmse(&rec, &truth)?;
            println!("rmse = {err:e}");
            println!("psnr_db = {}", runner::psnr_from_rmse(err, peak));
            println!("peak = {peak:e}");
        }
        Command::ReproduceTable1(common) => {
            let cfg = load(&common)?;
            let table = runner::reproduce_table1(&cfg)?;
            print!("{}", table.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
