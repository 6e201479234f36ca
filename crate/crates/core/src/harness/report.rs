//! Coverage runs over a grid and their tabular reports.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::confset::{ConfSetConstants, Mode};
use crate::error::{Error, Result};
use crate::harness::exec::{map_indexed, Execution};
use crate::harness::grid::{Cell, ExperimentGrid};
use crate::harness::stats::{mean, median, quantile};
use crate::harness::trial::{run_trial, PipelineConfig, TrialOutcome};
use crate::model::minimax_rate;

/// Cells may lose strictly less than this fraction of trials to numerical failures.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

/// Calibrated constants a coverage run depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConstants {
    /// Rate constant `C` in `r_k`.
    pub c_rate: f64,
    pub z_cal: f64,
    pub z_paper: f64,
    pub c_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell: Cell,
    pub trials: usize,
    pub failed: usize,
    pub coverage_paper: f64,
    pub coverage_calibrated: f64,
    pub mean_diameter_sq_paper: f64,
    pub median_diameter_sq_paper: f64,
    pub mean_diameter_sq_calibrated: f64,
    pub median_diameter_sq_calibrated: f64,
    pub mean_k_star: f64,
    pub frac_k_star_le_k0: f64,
    pub mean_risk: f64,
    /// `(1 − 8/d)`-quantile of `risk / ((σ + a)² d k0 / n)`.
    pub risk_ratio_quantile: f64,
    pub mean_r_hat: f64,
    pub mean_center_dist: f64,
    /// `r_{k0}` under the run's `C`.
    pub rate_k0: f64,
    pub max_sup_violation: f64,
    pub max_projection_gap: f64,
}

impl CellRecord {
    pub fn coverage(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Paper => self.coverage_paper,
            Mode::Calibrated => self.coverage_calibrated,
        }
    }

    pub fn mean_diameter_sq(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Paper => self.mean_diameter_sq_paper,
            Mode::Calibrated => self.mean_diameter_sq_calibrated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub grid: ExperimentGrid,
    pub pipeline: PipelineConfig,
    pub constants: RunConstants,
    pub records: Vec<CellRecord>,
    /// Per-cell trial outcomes, in cell order; kept for trial dumps.
    #[serde(skip)]
    pub outcomes: Vec<Vec<TrialOutcome>>,
    pub wall_clock_secs: f64,
}

/// `(σ + a)² d k0 / n`, the rate with unit constant.
pub fn unit_rate(cell: &Cell) -> Result<f64> {
    minimax_rate(cell.k0, &cell.params()?, 1.0)
}

/// Summarise successful outcomes of one cell.
pub fn aggregate(cell: &Cell, outcomes: &[TrialOutcome], failed: usize, c_rate: f64) -> Result<CellRecord> {
    let trials = outcomes.len() + failed;
    if failed as f64 >= MAX_FAILED_FRACTION * trials as f64 && failed > 0 {
        return Err(Error::CellFailed {
            cell: cell.label(),
            failed,
            trials,
        });
    }
    let count = outcomes.len() as f64;
    let frac = |pred: &dyn Fn(&TrialOutcome) -> bool| {
        outcomes.iter().filter(|o| pred(o)).count() as f64 / count
    };
    let col = |f: &dyn Fn(&TrialOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
    let unit = unit_rate(cell)?;
    let diam_paper = col(&|o| o.diameter_sq(Mode::Paper));
    let diam_cal = col(&|o| o.diameter_sq(Mode::Calibrated));

    Ok(CellRecord {
        cell: *cell,
        trials,
        failed,
        coverage_paper: frac(&|o| o.contained_paper),
        coverage_calibrated: frac(&|o| o.contained_calibrated),
        mean_diameter_sq_paper: mean(&diam_paper),
        median_diameter_sq_paper: median(&diam_paper),
        mean_diameter_sq_calibrated: mean(&diam_cal),
        median_diameter_sq_calibrated: median(&diam_cal),
        mean_k_star: mean(&col(&|o| o.k_star as f64)),
        frac_k_star_le_k0: frac(&|o| o.k_star <= cell.k0),
        mean_risk: mean(&col(&|o| o.risk)),
        risk_ratio_quantile: quantile(&col(&|o| o.risk / unit), cell.risk_level()),
        mean_r_hat: mean(&col(&|o| o.r_hat)),
        mean_center_dist: mean(&col(&|o| o.center_dist)),
        rate_k0: c_rate * unit,
        max_sup_violation: col(&|o| o.sup_violation).into_iter().fold(0.0, f64::max),
        max_projection_gap: col(&|o| o.projection_gap).into_iter().fold(0.0, f64::max),
    })
}

/// Run every trial of every cell and aggregate per cell.
pub fn run_grid(
    grid: &ExperimentGrid,
    pipeline: &PipelineConfig,
    constants: &RunConstants,
    exec: Execution,
) -> Result<CoverageReport> {
    let start = Instant::now();
    grid.validate()?;
    let cells = grid.cells()?;
    let calibrated = ConfSetConstants {
        z: constants.z_paper,
        c_star: constants.c_star,
        ..ConfSetConstants::calibrated(grid.alpha, constants.z_cal)?
    };
    calibrated.validate()?;

    let trials = grid.trials;
    let results = map_indexed(cells.len() * trials, exec, |idx| {
        let cell = &cells[idx / trials];
        run_trial(cell, idx % trials, grid.base_seed, pipeline, constants.c_rate, &calibrated)
    });

    let mut records = Vec::with_capacity(cells.len());
    let mut outcomes = Vec::with_capacity(cells.len());
    for (cell, chunk) in cells.iter().zip(results.chunks(trials)) {
        let mut ok = Vec::with_capacity(trials);
        let mut failed = 0;
        for r in chunk {
            match r {
                Ok(o) => ok.push(*o),
                Err(Error::Numerical(_)) => failed += 1,
                Err(e) => return Err(e.clone()),
            }
        }
        records.push(aggregate(cell, &ok, failed, constants.c_rate)?);
        outcomes.push(ok);
    }

    Ok(CoverageReport {
        grid: grid.clone(),
        pipeline: *pipeline,
        constants: *constants,
        records,
        outcomes,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Format with 9 significant digits, `%g` style, so reports are byte-stable.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        trim(&format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{}", trim(mantissa), exp)
    }
}

/// CSV column order of [`CoverageReport::to_csv`].
pub const CSV_COLUMNS: &[&str] = &[
    "cell",
    "m1",
    "m2",
    "k0",
    "n",
    "p",
    "d",
    "noise",
    "sigma",
    "u",
    "in_regime",
    "trials",
    "failed",
    "coverage_paper",
    "coverage_calibrated",
    "mean_diameter_sq_paper",
    "median_diameter_sq_paper",
    "mean_diameter_sq_calibrated",
    "median_diameter_sq_calibrated",
    "mean_k_star",
    "frac_k_star_le_k0",
    "mean_risk",
    "risk_ratio_quantile",
    "mean_r_hat",
    "mean_center_dist",
    "rate_k0",
    "max_sup_violation",
    "max_projection_gap",
    "c_rate",
    "z_cal",
];

/// Column order of [`CoverageReport::trials_csv`].
pub const TRIAL_COLUMNS: &[&str] = &[
    "cell",
    "trial",
    "contained_paper",
    "contained_calibrated",
    "diameter_sq_paper",
    "diameter_sq_calibrated",
    "k_star",
    "risk",
    "r_hat",
    "center_dist",
];

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.records {
            let c = &r.cell;
            let fields = [
                c.index.to_string(),
                c.m1.to_string(),
                c.m2.to_string(),
                c.k0.to_string(),
                c.n.to_string(),
                fmt_sig(c.n as f64 / (c.m1 * c.m2) as f64),
                c.d().to_string(),
                c.noise.kind.name().to_string(),
                fmt_sig(c.noise.sigma),
                fmt_sig(c.noise.bound()),
                c.in_regime.to_string(),
                r.trials.to_string(),
                r.failed.to_string(),
                fmt_sig(r.coverage_paper),
                fmt_sig(r.coverage_calibrated),
                fmt_sig(r.mean_diameter_sq_paper),
                fmt_sig(r.median_diameter_sq_paper),
                fmt_sig(r.mean_diameter_sq_calibrated),
                fmt_sig(r.median_diameter_sq_calibrated),
                fmt_sig(r.mean_k_star),
                fmt_sig(r.frac_k_star_le_k0),
                fmt_sig(r.mean_risk),
                fmt_sig(r.risk_ratio_quantile),
                fmt_sig(r.mean_r_hat),
                fmt_sig(r.mean_center_dist),
                fmt_sig(r.rate_k0),
                fmt_sig(r.max_sup_violation),
                fmt_sig(r.max_projection_gap),
                fmt_sig(self.constants.c_rate),
                fmt_sig(self.constants.z_cal),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn trials_csv(&self) -> String {
        let mut out = TRIAL_COLUMNS.join(",");
        out.push('\n');
        for (record, outcomes) in self.records.iter().zip(&self.outcomes) {
            for o in outcomes {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    record.cell.index,
                    o.trial,
                    o.contained_paper,
                    o.contained_calibrated,
                    fmt_sig(o.diameter_sq(Mode::Paper)),
                    fmt_sig(o.diameter_sq(Mode::Calibrated)),
                    o.k_star,
                    fmt_sig(o.risk),
                    fmt_sig(o.r_hat),
                    fmt_sig(o.center_dist),
                );
            }
        }
        out
    }

    /// Cells whose coverage in `mode` is below `1 − α − margin`.
    pub fn gate_failures(&self, mode: Mode, margin: f64) -> Vec<&CellRecord> {
        let floor = 1.0 - self.grid.alpha - margin;
        self.records
            .iter()
            .filter(|r| r.coverage(mode) < floor)
            .collect()
    }
}
