//! Experiment grids and their cells.

use serde::{Deserialize, Serialize};

use crate::confset::Mode;
use crate::error::{param_err, Result};
use crate::model::{ModelParams, NoiseKind, NoiseSpec};
use crate::rng::derive_seed;

/// How the sample budget of a cell is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Fraction of the `m1 m2` entries, rounded to the nearest integer count.
    Rate(f64),
    Count(usize),
}

impl Budget {
    pub fn resolve(&self, m1: usize, m2: usize) -> Result<usize> {
        let total = m1 * m2;
        let n = match *self {
            Budget::Rate(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(param_err(format!("sampling rate {r} must lie in (0, 1]")));
                }
                ((r * total as f64).round() as usize).max(1)
            }
            Budget::Count(n) => n,
        };
        if n == 0 || n > total {
            return Err(param_err(format!(
                "budget n = {n} must lie in [1, {total}] for a {m1}x{m2} matrix"
            )));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub shapes: Vec<(usize, usize)>,
    pub ranks: Vec<usize>,
    pub budgets: Vec<Budget>,
    pub noise: Vec<NoiseSpec>,
    pub a: f64,
    pub alpha: f64,
    pub trials: usize,
    pub mode: Mode,
    pub base_seed: u64,
    /// Flag cells below `n ≥ m log d` or with `d ≤ 16` as out of regime.
    pub strict: bool,
}

impl ExperimentGrid {
    /// 40/60/80 square shapes, ranks 1/2/4, sampling rates 0.3/0.5/0.8 and
    /// Rademacher noise at σ ∈ {0.1, 0.5}, with `a = 1`, `α = 0.1` and 200 trials.
    pub fn desk_default() -> Self {
        Self {
            shapes: vec![(40, 40), (60, 60), (80, 80)],
            ranks: vec![1, 2, 4],
            budgets: vec![Budget::Rate(0.3), Budget::Rate(0.5), Budget::Rate(0.8)],
            noise: vec![NoiseSpec::rademacher(0.1), NoiseSpec::rademacher(0.5)],
            a: 1.0,
            alpha: 0.1,
            trials: 200,
            mode: Mode::Calibrated,
            base_seed: 20_170_531,
            strict: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shapes.is_empty() || self.ranks.is_empty() || self.budgets.is_empty() || self.noise.is_empty() {
            return Err(param_err("grid needs at least one shape, rank, budget and noise setting"));
        }
        if self.trials == 0 {
            return Err(param_err("trials must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(param_err(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(param_err(format!("a = {} must be positive", self.a)));
        }
        for noise in &self.noise {
            NoiseSpec::new(noise.kind, noise.sigma)?;
        }
        for cell in self.cells()? {
            cell.params()?;
        }
        Ok(())
    }

    /// Cells in noise → shape → rank → budget order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        for noise in &self.noise {
            for &(m1, m2) in &self.shapes {
                for &k0 in &self.ranks {
                    if k0 == 0 || k0 > m1.min(m2) {
                        return Err(param_err(format!(
                            "rank {k0} does not fit a {m1}x{m2} matrix"
                        )));
                    }
                    for budget in &self.budgets {
                        let n = budget.resolve(m1, m2)?;
                        let d = m1 + m2;
                        let m = m1.min(m2);
                        let in_regime =
                            !self.strict || (d > 16 && n as f64 >= m as f64 * (d as f64).ln());
                        out.push(Cell {
                            index: out.len(),
                            m1,
                            m2,
                            k0,
                            n,
                            noise: *noise,
                            a: self.a,
                            in_regime,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn distinct_ranks(&self) -> usize {
        let mut r = self.ranks.clone();
        r.sort_unstable();
        r.dedup();
        r.len()
    }

    pub fn distinct_budgets(&self) -> Result<usize> {
        let mut ns = Vec::new();
        for &(m1, m2) in &self.shapes {
            for b in &self.budgets {
                ns.push(b.resolve(m1, m2)?);
            }
        }
        ns.sort_unstable();
        ns.dedup();
        Ok(ns.len())
    }
}

/// One `(shape, rank, budget, noise)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub m1: usize,
    pub m2: usize,
    pub k0: usize,
    pub n: usize,
    pub noise: NoiseSpec,
    pub a: f64,
    pub in_regime: bool,
}

impl Cell {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::with_noise(self.m1, self.m2, self.n, self.a, &self.noise)
    }

    pub fn d(&self) -> usize {
        self.m1 + self.m2
    }

    /// `1 − 8/d`, the confidence attached to the pilot risk bound.
    pub fn risk_level(&self) -> f64 {
        (1.0 - 8.0 / self.d() as f64).max(0.0)
    }

    /// Seed key derived from the cell's contents, not its position in a grid, so the
    /// same cell draws the same trials in any grid that contains it.
    pub fn key(&self) -> u64 {
        let kind = match self.noise.kind {
            NoiseKind::Rademacher => 1,
            NoiseKind::Uniform => 2,
        };
        derive_seed(
            self.m1 as u64,
            &[
                self.m2 as u64,
                self.k0 as u64,
                self.n as u64,
                kind,
                self.noise.sigma.to_bits(),
                self.a.to_bits(),
            ],
        )
    }

    pub fn label(&self) -> String {
        format!(
            "{}x{} k0={} n={} {}(sigma={})",
            self.m1,
            self.m2,
            self.k0,
            self.n,
            self.noise.kind.name(),
            self.noise.sigma
        )
    }
}
