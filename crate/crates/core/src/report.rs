//! Per-run solver logs shared by every reconstruction method.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub objective: f64,
    pub cumulative_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub solver: String,
    /// Row 0 is the objective at the initial point.
    pub rows: Vec<IterationRow>,
    pub rmse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub early_stop: bool,
    /// Line integrals clamped before exponentiation, summed over the run.
    pub clamps: usize,
    pub diagnostics: Vec<String>,
}

impl SolveReport {
    pub fn new(solver: impl Into<String>) -> Self {
        SolveReport {
            solver: solver.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, iteration: usize, objective: f64, cumulative_ms: f64) {
        self.rows.push(IterationRow {
            iteration,
            objective,
            cumulative_ms,
        });
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.rows.last().map(|r| r.objective)
    }

    /// Largest relative increase between consecutive rows (0 if none).
    pub fn max_relative_uphill(&self) -> f64 {
        max_relative_uphill(self.rows.iter().map(|r| r.objective))
    }
}

pub fn max_relative_uphill(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut worst = 0.0f64;
    let mut prev: Option<f64> = None;
    for v in values {
        if let Some(p) = prev {
            worst = worst.max((v - p) / p.abs().max(f64::MIN_POSITIVE));
        }
        prev = Some(v);
    }
    worst
}
