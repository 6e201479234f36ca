//! Command implementations behind the `mcci` binary.
//!
//! Each command returns a structured outcome so tests can drive it without a
//! subprocess; `main` maps errors onto the exit-code contract.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use mcci_core::confset::{build_confset, paper_z_min, ConfSetConstants};
use mcci_core::harness::calibrate::{calibrate, Calibration};
use mcci_core::harness::report::fmt_sig;
use mcci_core::harness::stats::binomial_se;
use mcci_core::harness::trial::{run_pilot, trial_seed};
use mcci_core::harness::{
    diameter_scaling_report, run_grid, Budget, Cell, CoverageReport, Execution, ExperimentGrid,
    PipelineConfig, RunConstants, ScalingReport,
};
use mcci_core::linalg::frob_dist_sq;
use mcci_core::selection::select_rank;
use mcci_core::{Error, Mode, NoiseSpec};
use serde::Serialize;
use serde_json::Value;

use config::{ConfigFile, ConstantsFile, DEFAULT_CONFIG, SCHEMA_VERSION};

/// Default output directory when neither `--out` nor the config names one.
pub const OUT_DIR_ENV: &str = "MCCI_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "mcci-out";
pub const DEFAULT_SEED: u64 = 20170531;

/// Constants from calibrating the shipped config; used by `demo` unless overridden.
pub const DEFAULT_CONSTANTS: &str = include_str!("../../../configs/constants.toml");

#[derive(Debug)]
pub enum CliError {
    /// Bad usage or configuration; exit 1.
    Config(String),
    /// Coverage gate failed; exit 2.
    Gate(String),
    /// Numerical or calibration failure; exit 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Gate(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Gate(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Replace every float with its 9-significant-digit rendering.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            fmt_sig(x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    let text = serde_json::to_string_pretty(&round_json(v))
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `--out`, then the environment variable, then the config, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<&str>, cfg: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Options shared by `coverage` and `calibrate`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dump_trials: bool,
    pub constants: Option<PathBuf>,
    /// Value of [`OUT_DIR_ENV`], passed in so tests need not touch the process env.
    pub env_out: Option<String>,
}

struct Loaded {
    cfg: ConfigFile,
    base_dir: PathBuf,
    grid: ExperimentGrid,
    pipeline: PipelineConfig,
    exec: Execution,
    out_dir: PathBuf,
}

fn load(opts: &RunOptions) -> Result<Loaded, CliError> {
    let (cfg, base_dir) = match &opts.config {
        Some(p) => (
            ConfigFile::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (ConfigFile::parse(DEFAULT_CONFIG)?, PathBuf::from(".")),
    };
    let mut grid = cfg.grid()?;
    if let Some(seed) = opts.seed {
        grid.base_seed = seed;
    }
    if let Some(mode) = opts.mode {
        grid.mode = mode;
    }
    let pipeline = cfg.pipeline()?;
    let exec = Execution::from_threads(opts.threads.or(cfg.run.threads));
    let out_dir = resolve_out_dir(
        opts.out.as_deref(),
        opts.env_out.as_deref(),
        cfg.run.output_dir.as_deref(),
    );
    Ok(Loaded {
        cfg,
        base_dir,
        grid,
        pipeline,
        exec,
        out_dir,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationRecord {
    /// `inline`, `config` or the constants file path.
    pub source: String,
    pub constants: RunConstants,
    pub details: Option<Calibration>,
}

/// Constants file written by `calibrate`, plus the full calibration record.
#[derive(Debug, Clone)]
pub struct CalibrateOutcome {
    pub calibration: Calibration,
    pub constants: ConstantsFile,
    pub constants_path: PathBuf,
    pub report_path: PathBuf,
}

/// `x` rounded to the 9 significant digits every report uses.
fn sig9(x: f64) -> f64 {
    fmt_sig(x).parse().unwrap_or(x)
}

fn constants_file(cal: &Calibration, grid: &ExperimentGrid, pipeline: &PipelineConfig) -> ConstantsFile {
    ConstantsFile {
        schema_version: SCHEMA_VERSION,
        c_rate: sig9(cal.rate.c),
        z_cal: sig9(cal.z.z_cal),
        z_paper: paper_z_min(pipeline.c_star),
        c_star: pipeline.c_star,
        alpha: grid.alpha,
        trials: grid.trials,
        base_seed: grid.base_seed,
    }
}

#[derive(Serialize)]
struct CalibrationJson<'a> {
    schema_version: u32,
    command: &'static str,
    grid: &'a ExperimentGrid,
    pipeline: &'a PipelineConfig,
    constants: &'a ConstantsFile,
    /// Largest-over-smallest risk quantile among cells sharing a noise setting.
    quantile_spread: Vec<(NoiseSpec, f64)>,
    calibration: &'a Calibration,
}

fn spreads(cal: &Calibration, grid: &ExperimentGrid) -> Vec<(NoiseSpec, f64)> {
    grid.noise
        .iter()
        .filter_map(|n| cal.rate.spread(|c| c.noise == *n).map(|s| (*n, s)))
        .collect()
}

pub fn cmd_calibrate(opts: &RunOptions, out: &mut impl Write) -> Result<CalibrateOutcome, CliError> {
    let l = load(opts)?;
    prepare_out_dir(&l.out_dir)?;
    let calibration = calibrate(&l.grid, &l.pipeline, l.exec)?;
    let constants = constants_file(&calibration, &l.grid, &l.pipeline);
    let constants_path = l.out_dir.join("constants.toml");
    let text = toml::to_string(&constants).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_text(&constants_path, &text)?;
    let report_path = l.out_dir.join("calibration.json");
    write_json(
        &report_path,
        &CalibrationJson {
            schema_version: SCHEMA_VERSION,
            command: "calibrate",
            grid: &l.grid,
            pipeline: &l.pipeline,
            constants: &constants,
            quantile_spread: spreads(&calibration, &l.grid),
            calibration: &calibration,
        },
    )?;
    let _ = writeln!(out, "C: {}", fmt_sig(constants.c_rate));
    let _ = writeln!(out, "z_cal: {}", fmt_sig(constants.z_cal));
    let _ = writeln!(out, "z (paper): {}", fmt_sig(constants.z_paper));
    for (noise, s) in spreads(&calibration, &l.grid) {
        let _ = writeln!(
            out,
            "risk quantile spread, {} sigma={}: {}",
            noise.kind.name(),
            fmt_sig(noise.sigma),
            fmt_sig(s)
        );
    }
    let _ = writeln!(out, "wrote {}", constants_path.display());
    Ok(CalibrateOutcome {
        calibration,
        constants,
        constants_path,
        report_path,
    })
}

#[derive(Debug, Clone)]
pub struct CoverageOutcome {
    pub report: CoverageReport,
    pub scaling: ScalingReport,
    pub calibration: CalibrationRecord,
    pub gate_margin: f64,
    /// Labels of cells below the calibrated-mode gate.
    pub gate_failures: Vec<String>,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub trials_path: Option<PathBuf>,
}

#[derive(Serialize)]
struct CoverageJson<'a> {
    schema_version: u32,
    command: &'static str,
    calibration: &'a CalibrationRecord,
    gate: GateJson<'a>,
    report: &'a CoverageReport,
    scaling: &'a ScalingReport,
}

#[derive(Serialize)]
struct GateJson<'a> {
    mode: Mode,
    margin: f64,
    floor: f64,
    failures: &'a [String],
}

fn resolve_constants(
    opts: &RunOptions,
    l: &Loaded,
) -> Result<CalibrationRecord, CliError> {
    let file = opts
        .constants
        .clone()
        .or_else(|| l.cfg.run.constants_file.as_ref().map(|p| l.base_dir.join(p)));
    if let Some(path) = file {
        let c = ConstantsFile::load(&path)?;
        return Ok(CalibrationRecord {
            source: path.display().to_string(),
            constants: c.run_constants(),
            details: None,
        });
    }
    if let Some(c) = l.cfg.constants {
        return Ok(CalibrationRecord {
            source: "config".into(),
            constants: RunConstants {
                c_rate: c.c_rate,
                z_cal: c.z_cal,
                z_paper: paper_z_min(l.pipeline.c_star),
                c_star: l.pipeline.c_star,
            },
            details: None,
        });
    }
    let cal = calibrate(&l.grid, &l.pipeline, l.exec)?;
    Ok(CalibrationRecord {
        source: "inline".into(),
        constants: constants_file(&cal, &l.grid, &l.pipeline).run_constants(),
        details: Some(cal),
    })
}

/// Default gate slack: three binomial standard errors at level `1 − α`.
pub fn default_gate_margin(alpha: f64, trials: usize) -> f64 {
    3.0 * binomial_se(1.0 - alpha, trials)
}

/// Runs the grid and writes reports. A failed coverage gate is reported through
/// [`CoverageOutcome::gate`] rather than as an error, so the reports stay inspectable.
pub fn cmd_coverage(opts: &RunOptions, out: &mut impl Write) -> Result<CoverageOutcome, CliError> {
    let l = load(opts)?;
    prepare_out_dir(&l.out_dir)?;
    let calibration = resolve_constants(opts, &l)?;
    let report = run_grid(&l.grid, &l.pipeline, &calibration.constants, l.exec)?;
    let scaling = diameter_scaling_report(&report, l.grid.mode);

    let gate_margin = l
        .cfg
        .run
        .gate_margin
        .unwrap_or_else(|| default_gate_margin(l.grid.alpha, l.grid.trials));
    let gate_failures: Vec<String> = report
        .gate_failures(Mode::Calibrated, gate_margin)
        .iter()
        .map(|r| r.cell.label())
        .collect();

    let csv_path = l.out_dir.join("coverage.csv");
    write_text(&csv_path, &report.to_csv())?;
    let json_path = l.out_dir.join("coverage.json");
    write_json(
        &json_path,
        &CoverageJson {
            schema_version: SCHEMA_VERSION,
            command: "coverage",
            calibration: &calibration,
            gate: GateJson {
                mode: Mode::Calibrated,
                margin: gate_margin,
                floor: 1.0 - l.grid.alpha - gate_margin,
                failures: &gate_failures,
            },
            report: &report,
            scaling: &scaling,
        },
    )?;
    let trials_path = if opts.dump_trials || l.cfg.run.dump_trials {
        let p = l.out_dir.join("trials.csv");
        write_text(&p, &report.trials_csv())?;
        Some(p)
    } else {
        None
    };

    let min_cov = |m: Mode| {
        report
            .records
            .iter()
            .map(|r| r.coverage(m))
            .fold(1.0, f64::min)
    };
    let _ = writeln!(out, "cells: {}", report.records.len());
    let _ = writeln!(
        out,
        "constants: C = {}, z_cal = {} ({})",
        fmt_sig(calibration.constants.c_rate),
        fmt_sig(calibration.constants.z_cal),
        calibration.source
    );
    let _ = writeln!(out, "min coverage (paper): {}", fmt_sig(min_cov(Mode::Paper)));
    let _ = writeln!(out, "min coverage (calibrated): {}", fmt_sig(min_cov(Mode::Calibrated)));
    let _ = writeln!(out, "wrote {}", csv_path.display());

    Ok(CoverageOutcome {
        report,
        scaling,
        calibration,
        gate_margin,
        gate_failures,
        csv_path,
        json_path,
        trials_path,
    })
}

impl CoverageOutcome {
    /// `Err(Gate)` when any cell fell below the calibrated-mode floor.
    pub fn gate(&self) -> Result<(), CliError> {
        if self.gate_failures.is_empty() {
            return Ok(());
        }
        Err(CliError::Gate(format!(
            "{} cell(s) below calibrated coverage {}: {}",
            self.gate_failures.len(),
            fmt_sig(1.0 - self.report.grid.alpha - self.gate_margin),
            self.gate_failures.join("; ")
        )))
    }
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub seed: u64,
    pub mode: Mode,
    pub sigma: f64,
    pub p: f64,
    pub constants: Option<PathBuf>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            mode: Mode::Calibrated,
            sigma: 0.1,
            p: 0.5,
            constants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutcome {
    pub risk: f64,
    pub k_star: usize,
    pub r_hat: f64,
    pub rho_sq: f64,
    pub contained: bool,
}

/// One 40×40 rank-2 instance through the whole pipeline.
pub fn cmd_demo(opts: &DemoOptions, out: &mut impl Write) -> Result<DemoOutcome, CliError> {
    let constants = match &opts.constants {
        Some(p) => ConstantsFile::load(p)?,
        None => toml::from_str::<ConstantsFile>(DEFAULT_CONSTANTS)
            .map_err(|e| CliError::Config(format!("shipped constants: {e}")))?,
    };
    let noise = NoiseSpec::new(mcci_core::NoiseKind::Rademacher, opts.sigma)?;
    let n = Budget::Rate(opts.p).resolve(40, 40)?;
    let cell = Cell {
        index: 0,
        m1: 40,
        m2: 40,
        k0: 2,
        n,
        noise,
        a: 1.0,
        in_regime: true,
    };
    let pipeline = PipelineConfig {
        c_star: constants.c_star,
        ..PipelineConfig::default()
    };
    let pilot = run_pilot(&cell, trial_seed(opts.seed, &cell, 0), &pipeline)?;
    let params = &pilot.params;
    let sel = select_rank(&pilot.estimate.matrix, params, constants.c_rate, params.a, pipeline.n_alt)?;
    let consts = ConfSetConstants {
        z: constants.z_paper,
        c_star: constants.c_star,
        ..ConfSetConstants::calibrated(constants.alpha, constants.z_cal)?
    }
    .with_mode(opts.mode);
    let cs = build_confset(&pilot.observation, &sel, params, &consts)?;
    let contained = cs.contains(&pilot.truth.matrix)?;

    let _ = writeln!(
        out,
        "instance: 40x40 rank 2, n = {n} (p = {}), rademacher sigma = {}, a = 1",
        fmt_sig(params.p()),
        fmt_sig(opts.sigma)
    );
    let _ = writeln!(
        out,
        "mode: {} (z = {}, C* = {}, alpha = {}, C = {})",
        opts.mode.name(),
        fmt_sig(consts.effective_z()),
        fmt_sig(consts.c_star),
        fmt_sig(consts.alpha),
        fmt_sig(constants.c_rate)
    );
    let _ = writeln!(out, "risk: {}", fmt_sig(pilot.risk));
    let _ = writeln!(out, "k*: {}", sel.k_star);
    let _ = writeln!(out, "r_hat: {}", fmt_sig(cs.r_hat));
    let _ = writeln!(out, "radius_sq: {}", fmt_sig(cs.rho_sq));
    let _ = writeln!(out, "diameter_sq: {}", fmt_sig(cs.diameter_sq()));
    let _ = writeln!(
        out,
        "distance_sq: {}",
        fmt_sig(frob_dist_sq(&cs.center, &pilot.truth.matrix) / params.entries() as f64)
    );
    let _ = writeln!(out, "contained: {contained}");
    Ok(DemoOutcome {
        risk: pilot.risk,
        k_star: sel.k_star,
        r_hat: cs.r_hat,
        rho_sq: cs.rho_sq,
        contained,
    })
}
