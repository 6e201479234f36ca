//! Bernoulli-sampled matrix completion model with bounded, centred, homoscedastic noise.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{sup_norm, Matrix};
use crate::rng::{keyed_rng, stream};

/// Dimensions, sample budget, signal bound and noise level of one problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m1: usize,
    pub m2: usize,
    /// Expected number of observed entries.
    pub n: usize,
    /// Entrywise bound on the truth.
    pub a: f64,
    pub sigma: f64,
    /// Almost-sure bound on each noise variable.
    pub u: f64,
}

impl ModelParams {
    pub fn new(m1: usize, m2: usize, n: usize, a: f64, sigma: f64, u: f64) -> Result<Self> {
        let params = Self {
            m1,
            m2,
            n,
            a,
            sigma,
            u,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for noise drawn from `noise`, so that `u` is the noise bound.
    pub fn with_noise(m1: usize, m2: usize, n: usize, a: f64, noise: &NoiseSpec) -> Result<Self> {
        Self::new(m1, m2, n, a, noise.sigma, noise.bound())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(param_err("matrix dimensions must be positive"));
        }
        if self.n == 0 || self.n > self.m1 * self.m2 {
            return Err(param_err(format!(
                "sample budget n = {} must lie in [1, {}]",
                self.n,
                self.m1 * self.m2
            )));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(param_err(format!("bound a = {} must be positive", self.a)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(param_err(format!("sigma = {} must be nonnegative", self.sigma)));
        }
        if !(self.u.is_finite() && self.u >= self.sigma) {
            return Err(param_err(format!(
                "noise bound U = {} must be at least sigma = {}",
                self.u, self.sigma
            )));
        }
        Ok(())
    }

    /// Sampling probability `n / (m1 m2)`.
    pub fn p(&self) -> f64 {
        self.n as f64 / self.entries() as f64
    }

    pub fn d(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn m(&self) -> usize {
        self.m1.min(self.m2)
    }

    pub fn entries(&self) -> usize {
        self.m1 * self.m2
    }

    fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (rows, cols) != (self.m1, self.m2) {
            return Err(param_err(format!(
                "matrix is {rows}x{cols} but params describe {}x{}",
                self.m1, self.m2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// `±σ` with equal probability; bound `U = σ`.
    Rademacher,
    /// Uniform on `[-√3 σ, √3 σ]`; bound `U = √3 σ`.
    Uniform,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Rademacher => "rademacher",
            NoiseKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(param_err(format!("noise sigma = {sigma} must be nonnegative")));
        }
        Ok(Self { kind, sigma })
    }

    pub fn rademacher(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::Rademacher,
            sigma,
        }
    }

    pub fn uniform(sigma: f64) -> Self {
        Self {
            kind: NoiseKind::Uniform,
            sigma,
        }
    }

    /// The bound `U` with `|ε| ≤ U` almost surely.
    pub fn bound(&self) -> f64 {
        match self.kind {
            NoiseKind::Rademacher => self.sigma,
            NoiseKind::Uniform => 3f64.sqrt() * self.sigma,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::Rademacher => {
                if rng.random::<bool>() {
                    self.sigma
                } else {
                    -self.sigma
                }
            }
            NoiseKind::Uniform => {
                let u: f64 = rng.random();
                self.bound() * (2.0 * u - 1.0)
            }
        }
    }
}

/// A truth `M₀` with `rank ≤ k0` and `‖M₀‖∞ = a`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub matrix: Matrix,
    pub k0: usize,
    pub a: f64,
    pub seed: u64,
}

/// Masked, noisy observation. `values` is zero wherever `mask` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub mask: DMatrix<bool>,
    pub values: Matrix,
    pub n_observed: usize,
}

impl Observation {
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }
}

/// `M₀ = L Rᵀ` with i.i.d. uniform(-1, 1) factors, rescaled so that the largest
/// entry has magnitude exactly `a`.
pub fn gen_low_rank(m1: usize, m2: usize, k0: usize, a: f64, seed: u64) -> Result<GroundTruth> {
    if m1 == 0 || m2 == 0 {
        return Err(param_err("matrix dimensions must be positive"));
    }
    if k0 == 0 || k0 > m1.min(m2) {
        return Err(param_err(format!(
            "rank k0 = {k0} must lie in [1, {}]",
            m1.min(m2)
        )));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(param_err(format!("bound a = {a} must be positive")));
    }

    let mut rng = keyed_rng(seed, &[stream::TRUTH]);
    let left = Matrix::from_fn(m1, k0, |_, _| rng.random_range(-1.0..1.0));
    let right = Matrix::from_fn(m2, k0, |_, _| rng.random_range(-1.0..1.0));
    let mut matrix = &left * right.transpose();

    let peak = sup_norm(&matrix);
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::Generation(
            "factor product is degenerate".into(),
        ));
    }
    let (argmax, _) = matrix
        .iter()
        .enumerate()
        .fold((0, 0.0_f64), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best });
    let sign = matrix.as_slice()[argmax].signum();
    matrix *= a / peak;
    // pin the boundary exactly; rounding may leave the peak one ulp either side
    matrix.iter_mut().for_each(|x| *x = x.clamp(-a, a));
    matrix.as_mut_slice()[argmax] = sign * a;

    Ok(GroundTruth {
        matrix,
        k0,
        a,
        seed,
    })
}

/// Draw `Y_ij = B_ij (M_ij + ε_ij)` with `B_ij ~ Bernoulli(p)`.
pub fn sample_observation(
    truth: &GroundTruth,
    params: &ModelParams,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Observation> {
    params.validate()?;
    let (rows, cols) = truth.matrix.shape();
    params.check_shape(rows, cols)?;
    if (noise.sigma - params.sigma).abs() > 1e-12 * params.sigma.max(1.0) {
        return Err(param_err(format!(
            "noise sigma {} does not match model sigma {}",
            noise.sigma, params.sigma
        )));
    }
    if noise.bound() > params.u * (1.0 + 1e-12) {
        return Err(param_err(format!(
            "noise bound {} exceeds model U {}",
            noise.bound(),
            params.u
        )));
    }

    let p = params.p();
    let mut mask_rng = keyed_rng(seed, &[stream::MASK]);
    let mut noise_rng = keyed_rng(seed, &[stream::NOISE]);
    // p = 1 must observe everything even though random() lies in [0, 1)
    let mask = DMatrix::from_fn(rows, cols, |_, _| mask_rng.random::<f64>() < p);
    let mut values = Matrix::zeros(rows, cols);
    let mut n_observed = 0;
    for j in 0..cols {
        for i in 0..rows {
            // draw noise for every entry so the noise stream does not depend on the mask
            let eps = noise.sample(&mut noise_rng);
            if mask[(i, j)] {
                values[(i, j)] = truth.matrix[(i, j)] + eps;
                n_observed += 1;
            }
        }
    }
    Ok(Observation {
        mask,
        values,
        n_observed,
    })
}

/// Rate proxy `r_k = C (σ + a)² d k / n`.
pub fn minimax_rate(k: usize, params: &ModelParams, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(param_err(format!("rate constant C = {c} must be positive")));
    }
    let spread = params.sigma + params.a;
    Ok(c * spread * spread * params.d() as f64 * k as f64 / params.n as f64)
}
