//! Versioned TOML run configuration and the constants file written by `calibrate`.

use std::path::{Path, PathBuf};

use mcci_core::harness::grid::{Budget, ExperimentGrid};
use mcci_core::harness::{PipelineConfig, RunConstants};
use mcci_core::{EstimatorConfig, Lambda, Mode, NoiseKind, NoiseSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// The config shipped with the binary; equal to `configs/default.toml`.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub grid: GridSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub run: RunSection,
    /// Calibrated constants; when absent, coverage runs calibrate first.
    pub constants: Option<ConstantsSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub shapes: Vec<[usize; 2]>,
    pub ranks: Vec<usize>,
    /// Sampling rates `n / (m1 m2)`; exclusive with `budget_counts`.
    pub budget_rates: Option<Vec<f64>>,
    pub budget_counts: Option<Vec<usize>>,
    pub noise_kind: NoiseKind,
    pub sigmas: Vec<f64>,
    pub a: f64,
    pub alpha: f64,
    pub trials: usize,
    pub mode: Mode,
    pub base_seed: u64,
    #[serde(default = "yes")]
    pub strict: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// `auto`, `rate_multiple` or `fixed`.
    pub lambda_rule: String,
    pub lambda_value: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub alternations: usize,
    pub c_star: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let Lambda::RateMultiple(mult) = p.estimator.lambda else {
            unreachable!("default pipeline uses a rate multiple")
        };
        Self {
            lambda_rule: "rate_multiple".into(),
            lambda_value: Some(mult),
            max_iters: p.estimator.max_iters,
            tol: p.estimator.tol,
            alternations: p.n_alt,
            c_star: p.c_star,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dump_trials: bool,
    /// Worker threads; 0 or absent uses every core.
    pub threads: Option<usize>,
    /// Coverage gate slack; defaults to three binomial standard errors. A negative
    /// value tightens the gate above `1 − α`.
    pub gate_margin: Option<f64>,
    /// Constants file produced by `calibrate`, relative to the config file.
    pub constants_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub c_rate: f64,
    pub z_cal: f64,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "config: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.grid()?.validate().map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.pipeline()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn grid(&self) -> Result<ExperimentGrid, CliError> {
        let g = &self.grid;
        let budgets = match (&g.budget_rates, &g.budget_counts) {
            (Some(r), None) => r.iter().map(|&x| Budget::Rate(x)).collect(),
            (None, Some(c)) => c.iter().map(|&x| Budget::Count(x)).collect(),
            _ => {
                return Err(CliError::Config(
                    "config: grid needs exactly one of `budget_rates` or `budget_counts`".into(),
                ))
            }
        };
        let noise = g
            .sigmas
            .iter()
            .map(|&s| NoiseSpec::new(g.noise_kind, s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        Ok(ExperimentGrid {
            shapes: g.shapes.iter().map(|s| (s[0], s[1])).collect(),
            ranks: g.ranks.clone(),
            budgets,
            noise,
            a: g.a,
            alpha: g.alpha,
            trials: g.trials,
            mode: g.mode,
            base_seed: g.base_seed,
            strict: g.strict,
        })
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let e = &self.estimator;
        let value = || {
            e.lambda_value.ok_or_else(|| {
                CliError::Config(format!(
                    "config: estimator.lambda_value is required for lambda_rule = \"{}\"",
                    e.lambda_rule
                ))
            })
        };
        let lambda = match e.lambda_rule.as_str() {
            "auto" => Lambda::Auto,
            "rate_multiple" => Lambda::RateMultiple(value()?),
            "fixed" => Lambda::Fixed(value()?),
            other => {
                return Err(CliError::Config(format!(
                    "config: unknown estimator.lambda_rule \"{other}\""
                )))
            }
        };
        let estimator = EstimatorConfig {
            lambda,
            max_iters: e.max_iters,
            tol: e.tol,
            clip: None,
        };
        estimator.validate().map_err(|err| CliError::Config(format!("config: {err}")))?;
        if e.alternations == 0 || e.c_star.is_nan() || e.c_star < 2.0 {
            return Err(CliError::Config(
                "config: estimator.alternations must be positive and c_star at least 2".into(),
            ));
        }
        Ok(PipelineConfig {
            estimator,
            n_alt: e.alternations,
            c_star: e.c_star,
        })
    }
}

/// Output of `calibrate`, read back by `coverage` and `demo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsFile {
    pub schema_version: u32,
    pub c_rate: f64,
    pub z_cal: f64,
    /// Smallest paper-mode `z`, reported for comparison.
    pub z_paper: f64,
    pub c_star: f64,
    pub alpha: f64,
    pub trials: usize,
    pub base_seed: u64,
}

impl ConstantsFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let c: ConstantsFile = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if c.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported schema_version {}",
                path.display(),
                c.schema_version
            )));
        }
        if !(c.c_rate > 0.0 && c.z_cal > 0.0) {
            return Err(CliError::Config(format!(
                "{}: c_rate and z_cal must be positive",
                path.display()
            )));
        }
        Ok(c)
    }

    pub fn run_constants(&self) -> RunConstants {
        RunConstants {
            c_rate: self.c_rate,
            z_cal: self.z_cal,
            z_paper: self.z_paper,
            c_star: self.c_star,
        }
    }
}
