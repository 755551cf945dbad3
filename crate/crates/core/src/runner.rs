//! Experiment configs, image metrics and on-disk artifacts.
//!
//! An experiment is one TOML file: grid, scan geometry, phantom, noise,
//! the solver to run and its parameter block. [`run_experiment`] simulates
//! the scan, reconstructs, and writes
//!
//! | file | contents |
//! |------|----------|
//! | `truth.f32`, `.hdr`, `.pgm` | ground-truth attenuation map |
//! | `sinogram.f32`, `.hdr`, `.pgm` | counts, `n_angles × n_detectors` |
//! | `reconstruction.f32`, `.hdr`, `.pgm` | the solver output |
//! | `mu.f32`, `b.f32`, `gamma.f32` (+ `.hdr`) | Lap-VARD final state only |
//! | `iterations.csv` | `iteration,objective,cumulative_ms` |
//! | `profile.csv` | `row,truth,reconstruction` for one image column |
//! | `metrics.toml` | RMSE, PSNR, peak, flags, diagnostics |
//!
//! Raw files are little-endian `f32`, row-major; the `.hdr` sidecar is plain
//! text with `format`, `dims` and `units` lines. Previews are 8-bit binary
//! PGM with min-max windowing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{run_am, AmConfig, PenaltyConfig};
use crate::error::{check_len, Error, Result};
use crate::lapvard::{run_lapvard, InitMuMode, LapVardConfig, VariationalState};
use crate::projector::{build_parallel_beam, GridSpec, ScanGeometry, SystemMatrix};
use crate::report::SolveReport;
use crate::simkit::{rasterize_phantom, simulate_counts, Ellipse, EllipsePhantomSpec, NoiseSpec};
use crate::transmission::{Image, Sinogram};
use crate::wavelet::WaveletBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Lapvard,
    Am,
    AmWavelet,
    AmNeighborhood,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Lapvard => "lapvard",
            SolverKind::Am => "am",
            SolverKind::AmWavelet => "am-wavelet",
            SolverKind::AmNeighborhood => "am-neighborhood",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomPreset {
    DeskHead,
}

/// Preset ellipses (if any) followed by the listed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub preset: Option<PhantomPreset>,
    pub background: f64,
    pub ellipses: Vec<Ellipse>,
}

impl PhantomConfig {
    pub fn to_spec(&self, side: usize) -> EllipsePhantomSpec {
        let mut spec = match self.preset {
            Some(PhantomPreset::DeskHead) => EllipsePhantomSpec::desk_head(side),
            None => EllipsePhantomSpec::default(),
        };
        spec.background += self.background;
        spec.ellipses.extend_from_slice(&self.ellipses);
        spec
    }
}

/// Penalty weight for a penalized AM run; `sweep` lists the weights
/// compared by `reproduce-table1` (defaults to `[weight]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenalizedBlock {
    pub weight: f64,
    #[serde(default)]
    pub sweep: Vec<f64>,
}

impl PenalizedBlock {
    fn weights(&self) -> Vec<f64> {
        if self.sweep.is_empty() {
            vec![self.weight]
        } else {
            self.sweep.clone()
        }
    }
}

/// Where the Lap-VARD seed image comes from: a raw file, or an unpenalized
/// AM run of `am_iterations` (other settings from `[am]`). The file wins
/// when both are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub image: Option<PathBuf>,
    pub am_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// PSNR peak; the ground-truth maximum when absent.
    pub peak: Option<f64>,
    /// Image column written to `profile.csv`; the middle column when absent.
    pub profile_column: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub solver: SolverKind,
    pub output_dir: PathBuf,
    /// Haar levels used by Lap-VARD and the wavelet-L1 penalty.
    #[serde(default = "default_levels")]
    pub wavelet_levels: usize,
    /// When false, `cumulative_ms` is written as 0 so reruns are bit-identical.
    #[serde(default)]
    pub record_wall_clock: bool,
    /// Seed image for Lap-VARD with `init_mu_mode = "from-image"`.
    #[serde(default)]
    pub lapvard_seed: Option<SeedConfig>,
    pub grid: GridSpec,
    pub geometry: ScanGeometry,
    #[serde(default)]
    pub phantom: PhantomConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub lapvard: Option<LapVardConfig>,
    /// Iteration controls shared by all three AM variants.
    pub am: Option<AmConfig>,
    pub am_wavelet: Option<PenalizedBlock>,
    pub am_neighborhood: Option<PenalizedBlock>,
}

fn default_levels() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The bundled 64 × 64 experiment: 96 angles × 96 detectors over a
    /// 256 mm field of view, head-like phantom, `I = 1e5`, seed 1.
    pub fn desk_default() -> Self {
        ExperimentConfig {
            solver: SolverKind::Lapvard,
            output_dir: PathBuf::from("out/desk"),
            wavelet_levels: 3,
            record_wall_clock: false,
            lapvard_seed: Some(SeedConfig {
                image: None,
                am_iterations: Some(5000),
            }),
            grid: GridSpec {
                n_pixels_per_side: 64,
                pixel_size: 4.0,
            },
            geometry: ScanGeometry {
                n_angles: 96,
                n_detectors: 96,
                detector_spacing: 3.8,
            },
            phantom: PhantomConfig {
                preset: Some(PhantomPreset::DeskHead),
                ..Default::default()
            },
            noise: NoiseSpec::default(),
            metrics: MetricsConfig::default(),
            lapvard: Some(LapVardConfig {
                n_outer: 1000,
                init_mu_mode: InitMuMode::FromImage,
                ..Default::default()
            }),
            am: Some(AmConfig {
                n_iterations: 5000,
                ..Default::default()
            }),
            am_wavelet: Some(PenalizedBlock {
                weight: 3e3,
                sweep: vec![1e3, 3e3, 1e4],
            }),
            am_neighborhood: Some(PenalizedBlock {
                weight: 1e4,
                sweep: vec![1e3, 1e4, 1e5],
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.geometry.validate()?;
        let missing = |block: &str| Error::Config(format!("solver {} needs a [{block}] block", self.solver.name()));
        match self.solver {
            SolverKind::Lapvard if self.lapvard.is_none() => return Err(missing("lapvard")),
            SolverKind::AmWavelet if self.am_wavelet.is_none() => return Err(missing("am_wavelet")),
            SolverKind::AmNeighborhood if self.am_neighborhood.is_none() => return Err(missing("am_neighborhood")),
            _ => {}
        }
        if let Some(l) = &self.lapvard {
            l.validate()?;
        }
        if let Some(a) = &self.am {
            a.validate()?;
        }
        if let Some(p) = self.metrics.peak {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("metrics.peak must be positive, got {p}")));
            }
        }
        if let Some(c) = self.metrics.profile_column {
            if c >= self.grid.n_pixels_per_side {
                return Err(Error::Config(format!("metrics.profile_column {c} is outside the grid")));
            }
        }
        Ok(())
    }

    fn am_config(&self) -> AmConfig {
        self.am.unwrap_or_default()
    }
}

/// `√(mean((x - t)²))`.
pub fn rmse(reconstruction: &Image, truth: &Image) -> Result<f64> {
    check_len("image side", truth.side(), reconstruction.side())?;
    let n = truth.pixels().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = reconstruction
        .pixels()
        .iter()
        .zip(truth.pixels())
        .map(|(x, t)| (x - t) * (x - t))
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// `20 log₁₀(peak / rmse)`; `+∞` when the images are identical.
pub fn psnr(reconstruction: &Image, truth: &Image, peak: f64) -> Result<f64> {
    Ok(psnr_from_rmse(rmse(reconstruction, truth)?, peak))
}

pub fn psnr_from_rmse(rmse: f64, peak: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (peak / rmse).log10()
    }
}

/// Column `column` of the image, top to bottom.
pub fn extract_profile(img: &Image, column: usize) -> Result<Vec<f64>> {
    if column >= img.side() {
        return Err(Error::InvalidParameter(format!(
            "profile column {column} outside image of side {}",
            img.side()
        )));
    }
    Ok((0..img.side()).map(|row| img.get(row, column)).collect())
}

/// A row-major array destined for a raw `f32` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawArray {
    /// Slowest-varying dimension first.
    pub dims: Vec<usize>,
    pub units: String,
    pub values: Vec<f64>,
}

impl RawArray {
    pub fn new(dims: Vec<usize>, units: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        check_len("raw array", dims.iter().product(), values.len())?;
        Ok(RawArray {
            dims,
            units: units.into(),
            values,
        })
    }

    pub fn image(img: &Image) -> Self {
        RawArray {
            dims: vec![img.side(), img.side()],
            units: "mm^-1".into(),
            values: img.pixels().to_vec(),
        }
    }

    pub fn to_image(&self) -> Result<Image> {
        match self.dims[..] {
            [r, c] if r == c => Image::new(r, self.values.clone()),
            _ => Err(Error::InvalidParameter(format!("array {:?} is not a square image", self.dims))),
        }
    }

    pub fn data_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
    }

    pub fn header(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(usize::to_string).collect();
        format!(
            "format f32le\norder row-major\ndims {}\nunits {}\n",
            dims.join(" "),
            self.units
        )
    }

    /// 8-bit binary PGM of a 1- or 2-D array, windowed from min to max.
    pub fn preview_pgm(&self) -> Vec<u8> {
        let (rows, cols) = match self.dims[..] {
            [r, c] => (r, c),
            _ => (1, self.values.len()),
        };
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        out.extend(self.values.iter().map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
        out
    }

    /// Reads `path` and its `.hdr` sidecar.
    pub fn read(path: &Path) -> Result<Self> {
        let header_path = path.with_extension("hdr");
        let fmt_err = |reason: String| Error::Format {
            path: header_path.clone(),
            reason,
        };
        let header = fs::read_to_string(&header_path)
            .map_err(|e| Error::io(format!("reading {}", header_path.display()), e))?;
        let mut dims = None;
        let mut units = String::new();
        for line in header.lines() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "format" if rest.trim() != "f32le" => return Err(fmt_err(format!("unsupported format {rest}"))),
                "dims" => {
                    let parsed: std::result::Result<Vec<usize>, _> =
                        rest.split_whitespace().map(str::parse).collect();
                    dims = Some(parsed.map_err(|e| fmt_err(format!("bad dims: {e}")))?);
                }
                "units" => units = rest.trim().to_string(),
                _ => {}
            }
        }
        let dims = dims.ok_or_else(|| fmt_err("missing dims line".into()))?;
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let count: usize = dims.iter().product();
        if bytes.len() != 4 * count {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected {} bytes for dims {dims:?}, found {}", 4 * count, bytes.len()),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        Ok(RawArray { dims, units, values })
    }
}

/// Files assembled in memory before anything touches the disk.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    /// `<stem>.f32`, `<stem>.hdr` and `<stem>.pgm`.
    pub fn add_raw(&mut self, stem: &str, array: &RawArray) {
        self.add(format!("{stem}.f32"), array.data_bytes());
        self.add(format!("{stem}.hdr"), array.header());
        self.add(format!("{stem}.pgm"), array.preview_pgm());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file under `dir`, removing the ones already written if
    /// any write fails.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(Error::io(format!("writing {}", path.display()), e));
            }
            written.push(path);
        }
        Ok(written)
    }
}

pub fn iterations_csv(report: &SolveReport, record_wall_clock: bool) -> String {
    let mut out = String::from("iteration,objective,cumulative_ms\n");
    for row in &report.rows {
        let ms = if record_wall_clock { row.cumulative_ms } else { 0.0 };
        let _ = writeln!(out, "{},{:e},{}", row.iteration, row.objective, ms);
    }
    out
}

pub fn profile_csv(truth: &[f64], reconstruction: &[f64]) -> String {
    let mut out = String::from("row,truth,reconstruction\n");
    for (row, (t, r)) in truth.iter().zip(reconstruction).enumerate() {
        let _ = writeln!(out, "{row},{t:e},{r:e}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub solver: String,
    pub iterations: usize,
    pub final_objective: f64,
    pub rmse: f64,
    pub psnr_db: f64,
    pub peak: f64,
    pub early_stop: bool,
    pub clamps: usize,
    pub diagnostics: Vec<String>,
}

impl MetricsSummary {
    fn from_report(report: &SolveReport, peak: f64) -> Self {
        MetricsSummary {
            solver: report.solver.clone(),
            iterations: report.rows.last().map_or(0, |r| r.iteration),
            final_objective: report.final_objective().unwrap_or(f64::NAN),
            rmse: report.rmse.unwrap_or(f64::NAN),
            psnr_db: report.psnr_db.unwrap_or(f64::NAN),
            peak,
            early_stop: report.early_stop,
            clamps: report.clamps,
            diagnostics: report.diagnostics.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics summary serializes")
    }
}

/// Geometry, system matrix, phantom and simulated scan of one experiment.
#[derive(Debug, Clone)]
pub struct Scan {
    pub grid: GridSpec,
    pub geometry: ScanGeometry,
    pub system: SystemMatrix,
    pub truth: Image,
    pub sinogram: Sinogram,
}

impl Scan {
    pub fn simulate(cfg: &ExperimentConfig) -> Result<Self> {
        let system = build_parallel_beam(&cfg.grid, &cfg.geometry)?;
        let truth = rasterize_phantom(&cfg.phantom.to_spec(cfg.grid.n_pixels_per_side), &cfg.grid)
            .map_err(|e| e.context("phantom"))?;
        let sinogram = simulate_counts(&system, &truth, &cfg.noise)?;
        Ok(Scan {
            grid: cfg.grid,
            geometry: cfg.geometry,
            system,
            truth,
            sinogram,
        })
    }

    /// Replaces the simulated counts with measured ones.
    pub fn with_counts(mut self, counts: Vec<f64>) -> Result<Self> {
        self.sinogram = Sinogram::new(counts, self.sinogram.air_scan().to_vec())?;
        Ok(self)
    }

    pub fn sinogram_array(&self) -> RawArray {
        RawArray {
            dims: vec![self.geometry.n_angles, self.geometry.n_detectors],
            units: "counts".into(),
            values: self.sinogram.counts().to_vec(),
        }
    }

    pub fn peak(&self, metrics: &MetricsConfig) -> f64 {
        metrics.peak.unwrap_or_else(|| self.truth.max())
    }
}

/// Output of one solver run.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: Image,
    pub report: SolveReport,
    /// Lap-VARD posterior, absent for AM.
    pub state: Option<VariationalState>,
}

fn seed_image(cfg: &ExperimentConfig, scan: &Scan) -> Result<Image> {
    let seed = cfg.lapvard_seed.clone().unwrap_or_default();
    if let Some(path) = &seed.image {
        let img = RawArray::read(path)?.to_image()?;
        check_len("seed image side", cfg.grid.n_pixels_per_side, img.side())?;
        return Ok(img);
    }
    match seed.am_iterations {
        Some(n_iterations) => {
            let am = AmConfig {
                n_iterations,
                ..cfg.am_config()
            };
            let (img, _) = run_am(&scan.system, &scan.sinogram, &PenaltyConfig::none(), &am)
                .map_err(|e| e.context("lapvard seed"))?;
            Ok(img)
        }
        None => Err(Error::Config(
            "init_mu_mode = \"from-image\" needs [lapvard_seed] with image or am_iterations".into(),
        )),
    }
}

/// Runs `solver` on the scan; `weight` overrides the penalty weight of the
/// penalized AM variants. RMSE and PSNR are filled into the report.
pub fn solve(
    cfg: &ExperimentConfig,
    scan: &Scan,
    solver: SolverKind,
    weight: Option<f64>,
) -> Result<Reconstruction> {
    let side = cfg.grid.n_pixels_per_side;
    let am = cfg.am_config();
    let block = |b: &Option<PenalizedBlock>, name: &str| {
        b.as_ref()
            .map(|b| weight.unwrap_or(b.weight))
            .or(weight)
            .ok_or_else(|| Error::Config(format!("solver {} needs a [{name}] block", solver.name())))
    };
    let mut rec = match solver {
        SolverKind::Lapvard => {
            let lcfg = cfg
                .lapvard
                .ok_or_else(|| Error::Config("solver lapvard needs a [lapvard] block".into()))?;
            let basis = WaveletBasis::new(side, cfg.wavelet_levels)?;
            let phi = scan.system.compose_with_basis(&basis)?;
            let seed = match lcfg.init_mu_mode {
                InitMuMode::FromImage => Some(basis.analyze(&seed_image(cfg, scan)?)?.into_inner()),
                InitMuMode::Zeros => None,
            };
            let run = run_lapvard(&phi, &scan.sinogram, &lcfg, seed.as_deref())?;
            let image = basis.synthesize(&run.state.mu.clone().into())?;
            Reconstruction {
                image,
                report: run.report,
                state: Some(run.state),
            }
        }
        SolverKind::Am => {
            let (image, report) = run_am(&scan.system, &scan.sinogram, &PenaltyConfig::none(), &am)?;
            Reconstruction {
                image,
                report,
                state: None,
            }
        }
        SolverKind::AmWavelet => {
            let w = block(&cfg.am_wavelet, "am_wavelet")?;
            let penalty = PenaltyConfig::wavelet_l1(w, cfg.wavelet_levels);
            let (image, report) = run_am(&scan.system, &scan.sinogram, &penalty, &am)?;
            Reconstruction {
                image,
                report,
                state: None,
            }
        }
        SolverKind::AmNeighborhood => {
            let w = block(&cfg.am_neighborhood, "am_neighborhood")?;
            let (image, report) = run_am(&scan.system, &scan.sinogram, &PenaltyConfig::neighborhood(w), &am)?;
            Reconstruction {
                image,
                report,
                state: None,
            }
        }
    };
    let err = rmse(&rec.image, &scan.truth)?;
    rec.report.rmse = Some(err);
    rec.report.psnr_db = Some(psnr_from_rmse(err, scan.peak(&cfg.metrics)));
    if !cfg.record_wall_clock {
        for row in &mut rec.report.rows {
            row.cumulative_ms = 0.0;
        }
    }
    Ok(rec)
}

/// Writes `truth` and `sinogram` artifacts only.
pub fn simulate_artifacts(scan: &Scan) -> Artifacts {
    let mut art = Artifacts::default();
    art.add_raw("truth", &RawArray::image(&scan.truth));
    art.add_raw("sinogram", &scan.sinogram_array());
    art
}

fn reconstruction_artifacts(
    art: &mut Artifacts,
    prefix: &str,
    cfg: &ExperimentConfig,
    scan: &Scan,
    rec: &Reconstruction,
) -> Result<()> {
    art.add_raw(&format!("{prefix}reconstruction"), &RawArray::image(&rec.image));
    if let Some(state) = &rec.state {
        for (name, values) in [("mu", &state.mu), ("b", &state.b), ("gamma", &state.gamma)] {
            let array = RawArray::new(vec![values.len()], "coefficients", values.clone())?;
            art.add(format!("{prefix}{name}.f32"), array.data_bytes());
            art.add(format!("{prefix}{name}.hdr"), array.header());
        }
    }
    art.add(format!("{prefix}iterations.csv"), iterations_csv(&rec.report, cfg.record_wall_clock));
    let column = cfg.metrics.profile_column.unwrap_or(cfg.grid.n_pixels_per_side / 2);
    art.add(
        format!("{prefix}profile.csv"),
        profile_csv(&extract_profile(&scan.truth, column)?, &extract_profile(&rec.image, column)?),
    );
    art.add(
        format!("{prefix}metrics.toml"),
        MetricsSummary::from_report(&rec.report, scan.peak(&cfg.metrics)).to_toml(),
    );
    Ok(())
}

/// Simulates, reconstructs with `cfg.solver`, and writes every artifact to
/// `cfg.output_dir`. Nothing is written if the solve fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let scan = Scan::simulate(cfg)?;
    run_on_scan(cfg, &scan)
}

/// [`run_experiment`] on an existing scan.
pub fn run_on_scan(cfg: &ExperimentConfig, scan: &Scan) -> Result<SolveReport> {
    let rec = solve(cfg, scan, cfg.solver, None).map_err(|e| e.context(format!("solver {}", cfg.solver.name())))?;
    let mut art = simulate_artifacts(scan);
    reconstruction_artifacts(&mut art, "", cfg, scan, &rec)?;
    art.write_all(&cfg.output_dir)?;
    Ok(rec.report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    pub weight: Option<f64>,
    pub rmse: f64,
    pub psnr_db: f64,
    pub iterations: usize,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub peak: f64,
    pub rows: Vec<TableRow>,
}

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,weight,rmse,psnr_db,iterations,final_objective\n");
        for r in &self.rows {
            let w = r.weight.map(|w| w.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{w},{:e},{},{},{:e}",
                r.method, r.rmse, r.psnr_db, r.iterations, r.final_objective
            );
        }
        out
    }

    /// Fixed-width text table for terminals.
    pub fn render(&self) -> String {
        let mut out = format!("{:<28} {:>12} {:>10}\n", "method", "RMSE", "PSNR (dB)");
        for r in &self.rows {
            let label = match r.weight {
                Some(w) => format!("{} (w = {w})", r.method),
                None => r.method.clone(),
            };
            let _ = writeln!(out, "{label:<28} {:>12.4e} {:>10.2}", r.rmse, r.psnr_db);
        }
        let _ = writeln!(out, "PSNR peak: {:.4e} mm^-1", self.peak);
        out
    }
}

/// Every solver on one scan: Lap-VARD, AM, and each weight of the two
/// penalized AM sweeps. Writes one reconstruction set per row plus
/// `table1.csv` under `cfg.output_dir`.
pub fn reproduce_table1(cfg: &ExperimentConfig) -> Result<ComparisonTable> {
    cfg.validate()?;
    let scan = Scan::simulate(cfg)?;
    let mut runs = vec![(SolverKind::Lapvard, None), (SolverKind::Am, None)];
    for (kind, block) in [
        (SolverKind::AmWavelet, &cfg.am_wavelet),
        (SolverKind::AmNeighborhood, &cfg.am_neighborhood),
    ] {
        if let Some(b) = block {
            runs.extend(b.weights().into_iter().map(|w| (kind, Some(w))));
        }
    }
    let peak = scan.peak(&cfg.metrics);
    let mut art = simulate_artifacts(&scan);
    let mut rows = Vec::new();
    for (kind, weight) in runs {
        let label = match weight {
            Some(w) => format!("{}-w{w}", kind.name()),
            None => kind.name().to_string(),
        };
        let rec = solve(cfg, &scan, kind, weight).map_err(|e| e.context(format!("solver {label}")))?;
        reconstruction_artifacts(&mut art, &format!("{label}_"), cfg, &scan, &rec)?;
        rows.push(TableRow {
            method: kind.name().to_string(),
            weight,
            rmse: rec.report.rmse.unwrap_or(f64::NAN),
            psnr_db: rec.report.psnr_db.unwrap_or(f64::NAN),
            iterations: rec.report.rows.last().map_or(0, |r| r.iteration),
            final_objective: rec.report.final_objective().unwrap_or(f64::NAN),
        });
    }
    let table = ComparisonTable { peak, rows };
    art.add("table1.csv", table.to_csv());
    art.write_all(&cfg.output_dir)?;
    Ok(table)
}
