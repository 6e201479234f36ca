//! How the calibrated-mode diameter scales with `k0`, `d` and `n`.

use serde::{Deserialize, Serialize};

use crate::confset::Mode;
use crate::harness::report::CoverageReport;
use crate::harness::stats::{least_squares, LinearFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub cell: usize,
    pub k0: usize,
    pub d: usize,
    pub n: usize,
    pub mean_diameter_sq: f64,
    /// `mean_diameter_sq / r_{k0}`.
    pub ratio_to_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub mode: Mode,
    pub rows: Vec<ScalingRow>,
    /// Fit of `ln diam² = b0 + b_k ln k0 + b_d ln d + b_n ln n`; slopes in that order.
    pub fit: Option<LinearFit>,
}

impl ScalingReport {
    pub fn k0_exponent(&self) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.slopes[0])
    }

    pub fn d_exponent(&self) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.slopes[1])
    }

    pub fn n_exponent(&self) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.slopes[2])
    }
}

/// Per-cell mean diameter relative to `r_{k0}`, plus a log-log fit over cells with a
/// positive mean diameter.
pub fn diameter_scaling_report(report: &CoverageReport, mode: Mode) -> ScalingReport {
    let rows: Vec<ScalingRow> = report
        .records
        .iter()
        .map(|r| {
            let diam = r.mean_diameter_sq(mode);
            ScalingRow {
                cell: r.cell.index,
                k0: r.cell.k0,
                d: r.cell.d(),
                n: r.cell.n,
                mean_diameter_sq: diam,
                ratio_to_rate: diam / r.rate_k0,
            }
        })
        .collect();
    let usable: Vec<&ScalingRow> = rows.iter().filter(|r| r.mean_diameter_sq > 0.0).collect();
    let x: Vec<Vec<f64>> = usable
        .iter()
        .map(|r| vec![(r.k0 as f64).ln(), (r.d as f64).ln(), (r.n as f64).ln()])
        .collect();
    let y: Vec<f64> = usable.iter().map(|r| r.mean_diameter_sq.ln()).collect();
    ScalingReport {
        mode,
        fit: least_squares(&x, &y),
        rows,
    }
}
