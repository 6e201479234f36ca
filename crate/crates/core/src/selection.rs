//! Rank-`k` projection onto bounded matrices and Lepski-style rank selection.
//!
//! The projection onto `{rank ≤ k} ∩ {‖·‖∞ ≤ a}` has no closed form. When the
//! truncated SVD already satisfies the entry bound it is the exact minimiser
//! (Eckart–Young); otherwise we alternate clamping and truncation, always finishing
//! on a truncation so that the rank constraint holds exactly.

use serde::Serialize;

use crate::error::{param_err, Result};
use crate::linalg::{clamp_entries, frob_dist_sq, frob_sq, sup_norm, Matrix, Spectrum};
use crate::model::{minimax_rate, ModelParams};

/// Relative slack on the entry bound accepted from SVD reconstruction error.
pub const SUP_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_ALTERNATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RankProjection {
    pub matrix: Matrix,
    pub k: usize,
    /// `‖M̂ − M̂_k‖²_F`, not normalised.
    pub residual_sq: f64,
    /// `max(0, ‖M̂_k‖∞ − a)`.
    pub sup_violation: f64,
    /// Squared distance of the plain truncated SVD, a lower bound on `residual_sq`.
    pub unconstrained_residual_sq: f64,
}

impl RankProjection {
    /// How far the returned projection is from the unconstrained optimum.
    pub fn gap(&self) -> f64 {
        self.residual_sq - self.unconstrained_residual_sq
    }
}

/// One row of the Lepski test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankTest {
    pub k: usize,
    /// `‖M̂ − M̂_k‖²_F / (m1 m2)`.
    pub normalized_residual: f64,
    /// `r_k`.
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k_star: usize,
    /// `M̃ = M̂_{k*}`.
    pub center: Matrix,
    /// Ranks among `tests` that passed.
    pub admissible: Vec<usize>,
    pub tests: Vec<RankTest>,
    pub projection: RankProjection,
}

fn within_bound(m: &Matrix, a: f64) -> bool {
    sup_norm(m) <= a * (1.0 + SUP_TOLERANCE)
}

fn check_args(k: usize, a: f64, n_alt: usize, max_rank: usize) -> Result<()> {
    if k > max_rank {
        return Err(param_err(format!("rank k = {k} exceeds min dimension {max_rank}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(param_err(format!("bound a = {a} must be positive")));
    }
    if n_alt == 0 {
        return Err(param_err("at least one alternation round is required"));
    }
    Ok(())
}

/// Approximate projection of `estimate` onto rank-`k` matrices bounded by `a`.
pub fn project_rank(estimate: &Matrix, k: usize, a: f64, n_alt: usize) -> Result<RankProjection> {
    let (r, c) = estimate.shape();
    check_args(k, a, n_alt, r.min(c))?;
    let spectrum = Spectrum::of(estimate)?;
    project_from_spectrum(estimate, &spectrum, k, a, n_alt)
}

fn project_from_spectrum(
    estimate: &Matrix,
    spectrum: &Spectrum,
    k: usize,
    a: f64,
    n_alt: usize,
) -> Result<RankProjection> {
    let unconstrained_residual_sq = spectrum.tail_energy(k);
    if k == 0 {
        return Ok(RankProjection {
            matrix: Matrix::zeros(estimate.nrows(), estimate.ncols()),
            k,
            residual_sq: frob_sq(estimate),
            sup_violation: 0.0,
            unconstrained_residual_sq,
        });
    }

    let truncated = spectrum.truncate(k);
    if within_bound(&truncated, a) {
        let residual_sq = frob_dist_sq(estimate, &truncated);
        return Ok(RankProjection {
            sup_violation: (sup_norm(&truncated) - a).max(0.0),
            matrix: truncated,
            k,
            residual_sq,
            unconstrained_residual_sq,
        });
    }

    let mut iterate = truncated;
    let mut best: Option<(f64, Matrix)> = None;
    for _ in 0..n_alt {
        clamp_entries(&mut iterate, a);
        iterate = Spectrum::of(&iterate)?.truncate(k);
        if within_bound(&iterate, a) {
            let dist = frob_dist_sq(estimate, &iterate);
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, iterate.clone()));
            }
        }
    }
    // no feasible iterate: keep the last rank-k one and report its violation
    let matrix = best.map(|(_, m)| m).unwrap_or(iterate);
    Ok(RankProjection {
        residual_sq: frob_dist_sq(estimate, &matrix),
        sup_violation: (sup_norm(&matrix) - a).max(0.0),
        matrix,
        k,
        unconstrained_residual_sq,
    })
}

/// Lepski selection: the smallest `k ≥ 1` with `‖M̂ − M̂_k‖²_F / (m1 m2) ≤ r_k`.
///
/// Stops at the first passing rank.
pub fn select_rank(
    estimate: &Matrix,
    params: &ModelParams,
    c: f64,
    a: f64,
    n_alt: usize,
) -> Result<Selection> {
    select(estimate, params, c, a, n_alt, false)
}

/// As [`select_rank`] but tests every rank `1..=m`, so `admissible` is the full set.
pub fn select_rank_exhaustive(
    estimate: &Matrix,
    params: &ModelParams,
    c: f64,
    a: f64,
    n_alt: usize,
) -> Result<Selection> {
    select(estimate, params, c, a, n_alt, true)
}

fn select(
    estimate: &Matrix,
    params: &ModelParams,
    c: f64,
    a: f64,
    n_alt: usize,
    exhaustive: bool,
) -> Result<Selection> {
    params.validate()?;
    if estimate.shape() != (params.m1, params.m2) {
        return Err(param_err(format!(
            "estimate is {:?} but params describe {}x{}",
            estimate.shape(),
            params.m1,
            params.m2
        )));
    }
    let m = params.m();
    check_args(m, a, n_alt, m)?;
    // validates C as well
    minimax_rate(1, params, c)?;

    let spectrum = Spectrum::of(estimate)?;
    let entries = params.entries() as f64;
    let mut tests = Vec::with_capacity(if exhaustive { m } else { 4 });
    let mut chosen: Option<RankProjection> = None;
    let mut previous: Option<RankProjection> = None;

    for k in 1..=m {
        let mut proj = project_from_spectrum(estimate, &spectrum, k, a, n_alt)?;
        // a feasible rank-(k-1) matrix is also feasible at rank k
        if let Some(prev) = &previous {
            if prev.sup_violation == 0.0 && prev.residual_sq < proj.residual_sq {
                proj = RankProjection {
                    k,
                    unconstrained_residual_sq: proj.unconstrained_residual_sq,
                    ..prev.clone()
                };
            }
        }
        let threshold = minimax_rate(k, params, c)?;
        let normalized_residual = proj.residual_sq / entries;
        let passed = normalized_residual <= threshold;
        tests.push(RankTest {
            k,
            normalized_residual,
            threshold,
            passed,
        });
        if passed && chosen.is_none() {
            chosen = Some(proj.clone());
            if !exhaustive {
                break;
            }
        }
        previous = Some(proj);
    }

    // residual at k = m is zero whenever M̂ respects the bound, so this only
    // triggers for an out-of-bound estimate
    let projection = match chosen {
        Some(p) => p,
        None => previous.expect("m >= 1"),
    };
    let admissible = tests.iter().filter(|t| t.passed).map(|t| t.k).collect();
    Ok(Selection {
        k_star: projection.k,
        center: projection.matrix.clone(),
        admissible,
        tests,
        projection,
    })
}
