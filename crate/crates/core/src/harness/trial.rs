//! One Monte Carlo trial: truth → observation → estimate → selection → confidence sets.

use serde::{Deserialize, Serialize};

use crate::confset::{radius_sq, residual_stat, ConfSetConstants, Mode, C_STAR_MIN};
use crate::error::Result;
use crate::estimator::{estimate, Estimate, EstimatorConfig, Lambda};
use crate::harness::grid::Cell;
use crate::linalg::frob_dist_sq;
use crate::model::{gen_low_rank, sample_observation, GroundTruth, ModelParams, Observation};
use crate::rng::{derive_seed, stream};
use crate::selection::{select_rank, DEFAULT_ALTERNATIONS};

/// Default multiplier `c` in `λ = c (σ + a) √(p d)` for harness runs.
pub const DEFAULT_LAMBDA_MULTIPLE: f64 = 0.3;

/// Everything besides the grid that determines a trial's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub estimator: EstimatorConfig,
    pub n_alt: usize,
    pub c_star: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::with_lambda(Lambda::RateMultiple(DEFAULT_LAMBDA_MULTIPLE)),
            n_alt: DEFAULT_ALTERNATIONS,
            c_star: C_STAR_MIN,
        }
    }
}

/// Seed of trial `trial` in `cell` under `base_seed`.
pub fn trial_seed(base_seed: u64, cell: &Cell, trial: usize) -> u64 {
    derive_seed(base_seed, &[cell.key(), trial as u64])
}

/// The model draw and pilot estimate of one trial.
#[derive(Debug, Clone)]
pub struct Pilot {
    pub params: ModelParams,
    pub truth: GroundTruth,
    pub observation: Observation,
    pub estimate: Estimate,
    /// `‖M̂ − M₀‖²_F / (m1 m2)`.
    pub risk: f64,
}

pub fn run_pilot(cell: &Cell, seed: u64, pipeline: &PipelineConfig) -> Result<Pilot> {
    let params = cell.params()?;
    let truth = gen_low_rank(
        cell.m1,
        cell.m2,
        cell.k0,
        cell.a,
        derive_seed(seed, &[stream::TRUTH]),
    )?;
    let observation = sample_observation(
        &truth,
        &params,
        &cell.noise,
        derive_seed(seed, &[stream::OBSERVATION]),
    )?;
    let estimate = estimate(&observation, &params, &pipeline.estimator)?;
    let risk = frob_dist_sq(&estimate.matrix, &truth.matrix) / params.entries() as f64;
    Ok(Pilot {
        params,
        truth,
        observation,
        estimate,
        risk,
    })
}

/// Per-trial results, in normalised `‖·‖²_F / (m1 m2)` units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub k_star: usize,
    pub risk: f64,
    /// `‖M̃ − M₀‖²_F / (m1 m2)`.
    pub center_dist: f64,
    pub r_hat: f64,
    pub rho_sq_paper: f64,
    pub rho_sq_calibrated: f64,
    pub contained_paper: bool,
    pub contained_calibrated: bool,
    pub sup_violation: f64,
    pub projection_gap: f64,
    pub iters: usize,
    pub converged: bool,
}

impl TrialOutcome {
    pub fn contained(&self, mode: Mode) -> bool {
        match mode {
            Mode::Paper => self.contained_paper,
            Mode::Calibrated => self.contained_calibrated,
        }
    }

    pub fn diameter_sq(&self, mode: Mode) -> f64 {
        4.0 * match mode {
            Mode::Paper => self.rho_sq_paper,
            Mode::Calibrated => self.rho_sq_calibrated,
        }
    }
}

/// Lepski selection and both confidence sets on top of a pilot.
pub fn finish_trial(
    trial: usize,
    pilot: &Pilot,
    pipeline: &PipelineConfig,
    c_rate: f64,
    calibrated: &ConfSetConstants,
) -> Result<TrialOutcome> {
    let params = &pilot.params;
    let selection = select_rank(&pilot.estimate.matrix, params, c_rate, params.a, pipeline.n_alt)?;
    let r_hat = residual_stat(&pilot.observation, &selection.center, params.sigma, params.n)?;
    let center_dist =
        frob_dist_sq(&selection.center, &pilot.truth.matrix) / params.entries() as f64;

    let calibrated = ConfSetConstants {
        c_star: pipeline.c_star,
        mode: Mode::Calibrated,
        ..*calibrated
    };
    let paper = ConfSetConstants {
        z: calibrated.z.max(crate::confset::paper_z_min(pipeline.c_star)),
        mode: Mode::Paper,
        ..calibrated
    };
    let rho_sq_paper = radius_sq(r_hat, selection.k_star, params, &paper)?;
    let rho_sq_calibrated = radius_sq(r_hat, selection.k_star, params, &calibrated)?;

    Ok(TrialOutcome {
        trial,
        k_star: selection.k_star,
        risk: pilot.risk,
        center_dist,
        r_hat,
        rho_sq_paper,
        rho_sq_calibrated,
        contained_paper: center_dist <= rho_sq_paper,
        contained_calibrated: center_dist <= rho_sq_calibrated,
        sup_violation: selection.projection.sup_violation,
        projection_gap: selection.projection.gap() / params.entries() as f64,
        iters: pilot.estimate.iters_used,
        converged: pilot.estimate.converged,
    })
}

pub fn run_trial(
    cell: &Cell,
    trial: usize,
    base_seed: u64,
    pipeline: &PipelineConfig,
    c_rate: f64,
    calibrated: &ConfSetConstants,
) -> Result<TrialOutcome> {
    let pilot = run_pilot(cell, trial_seed(base_seed, cell, trial), pipeline)?;
    finish_trial(trial, &pilot, pipeline, c_rate, calibrated)
}
