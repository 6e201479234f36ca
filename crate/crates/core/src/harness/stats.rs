//! Order-independent summaries and the log-log regression used by the scaling report.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Neumaier-compensated sum.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean of the values after sorting, so the result does not depend on input order.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    stable_sum(sorted) / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

/// Inverse empirical CDF: the smallest value `v` with `#{x ≤ v} ≥ q N`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Standard error of a Bernoulli proportion `q` estimated from `trials` draws.
pub fn binomial_se(q: f64, trials: usize) -> f64 {
    (q * (1.0 - q) / trials as f64).sqrt()
}

/// Ordinary least squares with an intercept. Regressors with no spread across the
/// rows are dropped and reported as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slopes: Vec<Option<f64>>,
    pub r_squared: f64,
}

pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<LinearFit> {
    let n = rows.len();
    if n == 0 || n != y.len() {
        return None;
    }
    let p = rows[0].len();
    let varying: Vec<usize> = (0..p)
        .filter(|&j| {
            let first = rows[0][j];
            rows.iter().any(|r| (r[j] - first).abs() > 1e-12 * first.abs().max(1.0))
        })
        .collect();
    let cols = varying.len() + 1;
    if n < cols {
        return None;
    }
    let x = DMatrix::from_fn(n, cols, |i, j| if j == 0 { 1.0 } else { rows[i][varying[j - 1]] });
    let yv = DVector::from_column_slice(y);
    let beta = (x.transpose() * &x).cholesky()?.solve(&(x.transpose() * &yv));

    let fitted = &x * &beta;
    let y_mean = mean(y);
    let ss_res = stable_sum(yv.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)));
    let ss_tot = stable_sum(y.iter().map(|v| (v - y_mean) * (v - y_mean)));
    let mut slopes = vec![None; p];
    for (pos, &j) in varying.iter().enumerate() {
        slopes[j] = Some(beta[pos + 1]);
    }
    Some(LinearFit {
        intercept: beta[0],
        slopes,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    })
}
