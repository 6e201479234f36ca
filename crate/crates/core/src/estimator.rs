//! Pilot estimator: singular value soft-thresholding with entrywise clipping.
//!
//! Each iteration fills the unobserved entries of `Y` with the current iterate,
//! soft-thresholds the singular values of the result by `λ`, and clamps the entries
//! to `[-a, a]`:
//!
//! ```text
//! X ← clip_a( SVT_λ( X − (𝒳(X) − Y) ) )
//! ```
//!
//! Without the clip this is proximal gradient with unit step on
//! `½‖𝒳(X) − Y‖² + λ‖X‖_*`, whose gradient is 1-Lipschitz.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{frob_dist_sq, frob_sq, Matrix, Spectrum};
use crate::model::{ModelParams, Observation};

/// Multiplier on `(σ + a)√(p d)` used by [`Lambda::Auto`].
pub const AUTO_LAMBDA_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum Lambda {
    /// [`auto_lambda`].
    Auto,
    /// `c · (σ + a)√(p d)`.
    RateMultiple(f64),
    Fixed(f64),
}

impl Lambda {
    pub fn resolve(&self, params: &ModelParams) -> Result<f64> {
        let value = match *self {
            Lambda::Auto => auto_lambda(params),
            Lambda::RateMultiple(c) => c * noise_scale(params),
            Lambda::Fixed(v) => v,
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(param_err(format!("lambda = {value} must be positive")));
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lambda: Lambda,
    pub max_iters: usize,
    /// Stop once `‖X_new − X‖_F / ‖X_new‖_F` drops below this.
    pub tol: f64,
    /// Entrywise clip bound; `None` uses the model's `a`.
    pub clip: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: Lambda::Auto,
            max_iters: 300,
            tol: 1e-6,
            clip: None,
        }
    }
}

impl EstimatorConfig {
    pub fn with_lambda(lambda: Lambda) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(param_err("max_iters must be at least 1"));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(param_err(format!("tol = {} must be positive", self.tol)));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(param_err(format!("clip = {c} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub matrix: Matrix,
    pub iters_used: usize,
    pub converged: bool,
    /// The resolved penalty weight.
    pub lambda: f64,
}

/// Objective values around one iteration, for monotonicity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Objective at the incoming (clipped) iterate.
    pub before: f64,
    /// Objective after the thresholding step, before clipping.
    pub after_step: f64,
    pub rel_change: f64,
}

fn noise_scale(params: &ModelParams) -> f64 {
    (params.sigma + params.a) * (params.p() * params.d() as f64).sqrt()
}

/// `λ = 3 (σ + a) √(p d)`.
pub fn auto_lambda(params: &ModelParams) -> f64 {
    AUTO_LAMBDA_FACTOR * noise_scale(params)
}

/// `½‖𝒳(X) − Y‖² + λ‖X‖_*`.
pub fn objective(x: &Matrix, obs: &Observation, lambda: f64) -> Result<f64> {
    let nuclear = Spectrum::of(x)?.nuclear_norm();
    Ok(data_fit(x, obs) + lambda * nuclear)
}

fn data_fit(x: &Matrix, obs: &Observation) -> f64 {
    let mut acc = 0.0;
    for ((xv, yv), &b) in x.iter().zip(obs.values.iter()).zip(obs.mask.iter()) {
        if b {
            acc += (xv - yv) * (xv - yv);
        }
    }
    0.5 * acc
}

pub fn estimate(obs: &Observation, params: &ModelParams, cfg: &EstimatorConfig) -> Result<Estimate> {
    run(obs, params, cfg, None)
}

/// Like [`estimate`], also returning per-iteration objective values.
pub fn estimate_traced(
    obs: &Observation,
    params: &ModelParams,
    cfg: &EstimatorConfig,
) -> Result<(Estimate, Vec<StepRecord>)> {
    let mut trace = Vec::new();
    let est = run(obs, params, cfg, Some(&mut trace))?;
    Ok((est, trace))
}

fn run(
    obs: &Observation,
    params: &ModelParams,
    cfg: &EstimatorConfig,
    mut trace: Option<&mut Vec<StepRecord>>,
) -> Result<Estimate> {
    params.validate()?;
    cfg.validate()?;
    if obs.shape() != (params.m1, params.m2) {
        return Err(param_err(format!(
            "observation is {:?} but params describe {}x{}",
            obs.shape(),
            params.m1,
            params.m2
        )));
    }
    let lambda = cfg.lambda.resolve(params)?;
    let bound = cfg.clip.unwrap_or(params.a);

    let mut x = Matrix::zeros(params.m1, params.m2);
    let mut converged = false;
    let mut iters_used = 0;
    let mut filled = obs.values.clone();

    while iters_used < cfg.max_iters {
        iters_used += 1;
        // X − (𝒳(X) − Y): observed entries take Y, the rest keep X
        for ((f, (&xv, &yv)), &b) in filled
            .iter_mut()
            .zip(x.iter().zip(obs.values.iter()))
            .zip(obs.mask.iter())
        {
            *f = if b { yv } else { xv };
        }
        let spectrum = Spectrum::of(&filled).map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!(
                "iteration {iters_used}: {msg} (divergent iterate?)"
            )),
            other => other,
        })?;
        let mut next = spectrum.soft_threshold(lambda);

        if let Some(trace) = trace.as_deref_mut() {
            let shrunk: f64 = spectrum
                .singular_values
                .iter()
                .map(|s| (s - lambda).max(0.0))
                .sum();
            trace.push(StepRecord {
                before: objective(&x, obs, lambda)?,
                after_step: data_fit(&next, obs) + lambda * shrunk,
                rel_change: 0.0,
            });
        }

        next.iter_mut().for_each(|v| *v = v.clamp(-bound, bound));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "iteration {iters_used} produced non-finite entries"
            )));
        }

        let norm = frob_sq(&next).sqrt();
        let change = frob_dist_sq(&next, &x).sqrt();
        let rel = if norm > 0.0 { change / norm } else { change };
        if let Some(last) = trace.as_deref_mut().and_then(|t| t.last_mut()) {
            last.rel_change = rel;
        }
        x = next;
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(Estimate {
        matrix: x,
        iters_used,
        converged,
        lambda,
    })
}
