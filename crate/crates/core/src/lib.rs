//! Honest, rank-adaptive Frobenius confidence sets for noisy matrix completion
//! under the Bernoulli sampling model with known noise variance.
//!
//! The pipeline is:
//!
//! 1. [`model`]: draw a bounded low-rank truth and a Bernoulli-masked noisy observation.
//! 2. [`estimator`]: pilot estimate by clipped singular value soft-thresholding.
//! 3. [`selection`]: project the pilot onto rank-`k` bounded matrices and pick the
//!    smallest rank whose residual falls under the rate threshold (Lepski's method).
//! 4. [`confset`]: centre a Frobenius ball at the selected projection, with a radius
//!    driven by the centred residual sum of squares.
//!
//! [`harness`] runs the pipeline over experiment grids to measure coverage, diameter
//! scaling and rank adaptivity, and calibrates the two free constants.

pub mod confset;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod selection;

pub use confset::{ConfSetConstants, ConfidenceSet, Mode};
pub use error::{Error, Result};
pub use estimator::{Estimate, EstimatorConfig, Lambda};
pub use model::{GroundTruth, ModelParams, NoiseKind, NoiseSpec, Observation};
pub use selection::{RankProjection, Selection};
