//! Empirical calibration of the rate constant `C` and the desk-scale `z_cal`.
//!
//! Both stages draw trials from their own seed streams, disjoint from each other and
//! from coverage runs under the same base seed.

use serde::{Deserialize, Serialize};

use crate::confset::{radius_sq, ConfSetConstants};
use crate::error::{param_err, Error, Result};
use crate::harness::exec::{map_indexed, Execution};
use crate::harness::grid::{Cell, ExperimentGrid};
use crate::harness::report::{unit_rate, MAX_FAILED_FRACTION};
use crate::harness::stats::quantile;
use crate::harness::trial::{run_pilot, trial_seed, PipelineConfig};
use crate::model::ModelParams;
use crate::rng::{derive_seed, stream};
use crate::selection::select_rank;

/// Decade sweep for `z_cal`, as powers of ten.
pub const Z_SWEEP_EXPONENTS: std::ops::RangeInclusive<i32> = -4..=4;
/// Bisection stops once the bracket ratio is at most this.
pub const Z_REFINE_RATIO: f64 = 1.25;

const STAGE_C: u64 = 1;
const STAGE_Z: u64 = 2;

fn stage_seed(base: u64, stage: u64) -> u64 {
    derive_seed(base, &[stream::CALIBRATION, stage])
}

/// Every grid used for calibration must span at least three ranks and three budgets.
pub fn check_calibration_grid(grid: &ExperimentGrid) -> Result<()> {
    grid.validate()?;
    let ranks = grid.distinct_ranks();
    let budgets = grid.distinct_budgets()?;
    if ranks < 3 || budgets < 3 {
        return Err(param_err(format!(
            "calibration needs at least 3 ranks and 3 budgets, grid has {ranks} and {budgets}"
        )));
    }
    Ok(())
}

fn check_failures(cell: &Cell, failed: usize, trials: usize) -> Result<()> {
    if failed > 0 && failed as f64 >= MAX_FAILED_FRACTION * trials as f64 {
        return Err(Error::CellFailed {
            cell: cell.label(),
            failed,
            trials,
        });
    }
    Ok(())
}

/// Split per-trial results into successes, counting numerical failures per cell.
fn collect<T>(cells: &[Cell], trials: usize, results: Vec<Result<T>>) -> Result<Vec<Vec<T>>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(cells.len());
    let mut it = results.into_iter();
    for cell in cells {
        let mut ok = Vec::with_capacity(trials);
        let mut failed = 0;
        for r in it.by_ref().take(trials) {
            match r {
                Ok(v) => ok.push(v),
                Err(Error::Numerical(_)) => failed += 1,
                Err(e) => return Err(e),
            }
        }
        check_failures(cell, failed, trials)?;
        out.push(ok);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskQuantile {
    pub cell: Cell,
    /// `(1 − 8/d)`-quantile of `risk / ((σ + a)² d k0 / n)`.
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCalibration {
    pub c: f64,
    pub per_cell: Vec<RiskQuantile>,
}

impl RateCalibration {
    /// Ratio of largest to smallest quantile among cells accepted by `filter`.
    pub fn spread(&self, filter: impl Fn(&Cell) -> bool) -> Option<f64> {
        let qs: Vec<f64> = self
            .per_cell
            .iter()
            .filter(|q| filter(&q.cell))
            .map(|q| q.quantile)
            .collect();
        if qs.is_empty() {
            return None;
        }
        let hi = qs.iter().copied().fold(f64::MIN, f64::max);
        let lo = qs.iter().copied().fold(f64::MAX, f64::min);
        Some(hi / lo)
    }
}

/// Largest per-cell `(1 − 8/d)`-quantile of the normalised pilot risk.
pub fn calibrate_c(
    grid: &ExperimentGrid,
    pipeline: &PipelineConfig,
    exec: Execution,
) -> Result<RateCalibration> {
    check_calibration_grid(grid)?;
    let cells = grid.cells()?;
    let trials = grid.trials;
    let base = stage_seed(grid.base_seed, STAGE_C);
    let results = map_indexed(cells.len() * trials, exec, |idx| {
        let cell = &cells[idx / trials];
        let pilot = run_pilot(cell, trial_seed(base, cell, idx % trials), pipeline)?;
        Ok(pilot.risk / unit_rate(cell)?)
    });
    let ratios = collect(&cells, trials, results)?;
    let per_cell: Vec<RiskQuantile> = cells
        .iter()
        .zip(&ratios)
        .map(|(cell, r)| RiskQuantile {
            cell: *cell,
            quantile: quantile(r, cell.risk_level()),
        })
        .collect();
    let c = per_cell.iter().map(|q| q.quantile).fold(0.0, f64::max);
    Ok(RateCalibration { c, per_cell })
}

/// What a confidence set needs from a trial once `C` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZSample {
    pub k_star: usize,
    pub r_hat: f64,
    pub center_dist: f64,
}

/// Stage-two trials, reusable across `α`.
#[derive(Debug, Clone)]
pub struct ZSamples {
    pub cells: Vec<Cell>,
    pub samples: Vec<Vec<ZSample>>,
    pub c_star: f64,
}

pub fn collect_z_samples(
    grid: &ExperimentGrid,
    pipeline: &PipelineConfig,
    c_rate: f64,
    exec: Execution,
) -> Result<ZSamples> {
    check_calibration_grid(grid)?;
    if !(c_rate > 0.0 && c_rate.is_finite()) {
        return Err(param_err(format!("rate constant C = {c_rate} must be positive")));
    }
    let cells = grid.cells()?;
    let trials = grid.trials;
    let base = stage_seed(grid.base_seed, STAGE_Z);
    let results = map_indexed(cells.len() * trials, exec, |idx| {
        let cell = &cells[idx / trials];
        let pilot = run_pilot(cell, trial_seed(base, cell, idx % trials), pipeline)?;
        let params = &pilot.params;
        let selection =
            select_rank(&pilot.estimate.matrix, params, c_rate, params.a, pipeline.n_alt)?;
        let r_hat = crate::confset::residual_stat(
            &pilot.observation,
            &selection.center,
            params.sigma,
            params.n,
        )?;
        let center_dist = crate::linalg::frob_dist_sq(&selection.center, &pilot.truth.matrix)
            / params.entries() as f64;
        Ok(ZSample {
            k_star: selection.k_star,
            r_hat,
            center_dist,
        })
    });
    Ok(ZSamples {
        samples: collect(&cells, trials, results)?,
        cells,
        c_star: pipeline.c_star,
    })
}

impl ZSamples {
    /// Per-cell calibrated-mode coverage at `z`.
    pub fn coverage(&self, z: f64, alpha: f64) -> Result<Vec<f64>> {
        let consts = ConfSetConstants {
            c_star: self.c_star,
            ..ConfSetConstants::calibrated(alpha, z)?
        };
        self.cells
            .iter()
            .zip(&self.samples)
            .map(|(cell, samples)| {
                let params: ModelParams = cell.params()?;
                let mut hit = 0usize;
                for s in samples {
                    if s.center_dist <= radius_sq(s.r_hat, s.k_star, &params, &consts)? {
                        hit += 1;
                    }
                }
                Ok(hit as f64 / samples.len() as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZCalibration {
    pub z_cal: f64,
    pub alpha: f64,
    /// Per-cell coverage at `z_cal`, in cell order.
    pub coverage: Vec<f64>,
    /// `(z, min coverage)` for every `z` evaluated, in evaluation order.
    pub sweep: Vec<(f64, f64)>,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest `z` on the sweep with every cell at coverage `≥ 1 − α`, refined by
/// geometric bisection.
pub fn calibrate_z_from(samples: &ZSamples, alpha: f64) -> Result<ZCalibration> {
    let target = 1.0 - alpha;
    let mut sweep = Vec::new();
    let mut prev: Option<f64> = None;
    let mut hit: Option<(f64, Vec<f64>)> = None;
    let mut last = Vec::new();
    for e in Z_SWEEP_EXPONENTS {
        let z = 10f64.powi(e);
        let cov = samples.coverage(z, alpha)?;
        sweep.push((z, min_of(&cov)));
        if min_of(&cov) >= target {
            hit = Some((z, cov));
            break;
        }
        prev = Some(z);
        last = cov;
    }
    let Some((mut hi, mut hi_cov)) = hit else {
        let (worst, cov) = last
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, c)| (samples.cells[i].label(), *c))
            .unwrap_or_default();
        return Err(Error::Calibration(format!(
            "no z on the sweep reaches coverage {target}; worst cell {worst} at {cov}"
        )));
    };
    if let Some(mut lo) = prev {
        while hi / lo > Z_REFINE_RATIO {
            let mid = (lo * hi).sqrt();
            let cov = samples.coverage(mid, alpha)?;
            sweep.push((mid, min_of(&cov)));
            if min_of(&cov) >= target {
                hi = mid;
                hi_cov = cov;
            } else {
                lo = mid;
            }
        }
    }
    Ok(ZCalibration {
        z_cal: hi,
        alpha,
        coverage: hi_cov,
        sweep,
    })
}

pub fn calibrate_z(
    grid: &ExperimentGrid,
    pipeline: &PipelineConfig,
    c_rate: f64,
    exec: Execution,
) -> Result<ZCalibration> {
    calibrate_z_from(&collect_z_samples(grid, pipeline, c_rate, exec)?, grid.alpha)
}

/// Both calibration stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub rate: RateCalibration,
    pub z: ZCalibration,
}

pub fn calibrate(
    grid: &ExperimentGrid,
    pipeline: &PipelineConfig,
    exec: Execution,
) -> Result<Calibration> {
    let rate = calibrate_c(grid, pipeline, exec)?;
    let z = calibrate_z(grid, pipeline, rate.c, exec)?;
    Ok(Calibration { rate, z })
}
