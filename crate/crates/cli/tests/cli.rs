use std::path::Path;
use std::process::Command;

use mcci_cli::config::{ConfigFile, ConstantsFile, DEFAULT_CONFIG};
use mcci_cli::{
    cmd_calibrate, cmd_coverage, cmd_demo, resolve_out_dir, CliError, DemoOptions, RunOptions,
};
use mcci_core::Mode;

const SMALL: &str = r#"
schema_version = 1

[grid]
shapes = [[16, 16], [20, 20], [24, 24]]
ranks = [1, 2, 3]
budget_rates = [0.4, 0.6, 0.8]
noise_kind = "rademacher"
sigmas = [0.2]
a = 1.0
alpha = 0.1
trials = 8
mode = "calibrated"
base_seed = 5
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("grid.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcci"))
}

#[test]
fn shipped_config_has_54_cells() {
    let cfg = ConfigFile::parse(DEFAULT_CONFIG).unwrap();
    let grid = cfg.grid().unwrap();
    assert_eq!(grid.cells().unwrap().len(), 3 * 3 * 3 * 2);
    assert_eq!(grid.trials, 200);
    assert_eq!(grid.alpha, 0.1);
    let on_disk = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml")).unwrap();
    assert_eq!(on_disk, DEFAULT_CONFIG);
}

#[test]
fn missing_field_is_named() {
    let text = SMALL.replace("trials = 8\n", "");
    let err = ConfigFile::parse(&text).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("trials"), "{err}");
}

#[test]
fn schema_version_and_budgets_checked() {
    let err = ConfigFile::parse(&SMALL.replace("schema_version = 1", "schema_version = 7")).unwrap_err();
    assert!(err.to_string().contains("schema_version"));
    let both = SMALL.replace("budget_rates", "budget_counts = [10]\nbudget_rates");
    assert!(ConfigFile::parse(&both).is_err());
    let unknown = SMALL.replace("a = 1.0", "a = 1.0\nbogus = 2");
    assert!(ConfigFile::parse(&unknown).unwrap_err().to_string().contains("bogus"));
}

#[test]
fn out_dir_precedence() {
    let flag = Path::new("flag");
    let cfg = Path::new("cfg");
    assert_eq!(resolve_out_dir(Some(flag), Some("env"), Some(cfg)), Path::new("flag"));
    assert_eq!(resolve_out_dir(None, Some("env"), Some(cfg)), Path::new("env"));
    assert_eq!(resolve_out_dir(None, Some(""), Some(cfg)), Path::new("cfg"));
    assert_eq!(resolve_out_dir(None, None, None), Path::new("mcci-out"));
}

#[test]
fn demo_is_deterministic() {
    let run = || {
        let mut buf = Vec::new();
        let o = cmd_demo(&DemoOptions::default(), &mut buf).unwrap();
        (o, String::from_utf8(buf).unwrap())
    };
    let (a, text_a) = run();
    let (b, text_b) = run();
    assert_eq!(a, b);
    assert_eq!(text_a, text_b);
    assert!(text_a.contains("contained: "));
}

#[test]
fn demo_noiseless_full_observation() {
    let opts = DemoOptions {
        sigma: 0.0,
        p: 1.0,
        ..DemoOptions::default()
    };
    let mut buf = Vec::new();
    let o = cmd_demo(&opts, &mut buf).unwrap();
    assert!(o.contained);
    assert!(o.risk < 0.01, "risk {}", o.risk);
    assert!(String::from_utf8(buf).unwrap().contains("contained: true"));
}

#[test]
fn demo_paper_radius_dominates() {
    let run = |mode| {
        cmd_demo(
            &DemoOptions {
                mode,
                ..DemoOptions::default()
            },
            &mut std::io::sink(),
        )
        .unwrap()
    };
    assert!(run(Mode::Paper).rho_sq > run(Mode::Calibrated).rho_sq);
}

#[test]
fn coverage_with_inline_constants_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[constants]\nc_rate = 0.3\nz_cal = 0.01\n");
    let config = write_config(dir.path(), &text);
    let run = |out: &str, threads| {
        cmd_coverage(
            &RunOptions {
                config: Some(config.clone()),
                out: Some(dir.path().join(out)),
                threads,
                dump_trials: true,
                ..RunOptions::default()
            },
            &mut std::io::sink(),
        )
        .unwrap()
    };
    let a = run("a", Some(1));
    let b = run("b", Some(2));
    assert_eq!(std::fs::read(&a.csv_path).unwrap(), std::fs::read(&b.csv_path).unwrap());
    assert_eq!(a.calibration.source, "config");

    let csv = std::fs::read_to_string(&a.csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 27);
    assert!(csv.starts_with("cell,m1,m2,k0,n,"));
    let trials = std::fs::read_to_string(a.trials_path.as_ref().unwrap()).unwrap();
    assert_eq!(trials.lines().count(), 1 + 27 * 8);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&a.json_path).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["report"]["records"].as_array().unwrap().len(), 27);
    let risk = json["report"]["records"][0]["mean_risk"].as_f64().unwrap();
    assert_eq!(mcci_core::harness::report::fmt_sig(risk).parse::<f64>().unwrap(), risk);
}

#[test]
fn calibrate_then_coverage_passes_gate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let cal = cmd_calibrate(
        &RunOptions {
            config: Some(config.clone()),
            out: Some(dir.path().join("cal")),
            ..RunOptions::default()
        },
        &mut std::io::sink(),
    )
    .unwrap();
    let constants = ConstantsFile::load(&cal.constants_path).unwrap();
    assert!(constants.c_rate > 0.0 && constants.z_cal > 0.0);
    assert!(constants.z_cal <= constants.z_paper);
    assert_eq!(constants.z_paper, 6240.0);

    let cov = cmd_coverage(
        &RunOptions {
            config: Some(config),
            out: Some(dir.path().join("cov")),
            constants: Some(cal.constants_path.clone()),
            ..RunOptions::default()
        },
        &mut std::io::sink(),
    )
    .unwrap();
    assert!(cov.gate().is_ok(), "{:?}", cov.gate_failures);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &SMALL.replace("alpha = 0.1\n", ""));
    let out = bin().args(["coverage", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let out = bin().args(["coverage", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let out = bin().args(["demo", "--seed", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("k*: "));

    // coverage far below the floor trips the gate but still writes the reports
    let strict = format!("{SMALL}\n[constants]\nc_rate = 0.3\nz_cal = 0.0001\n[run]\ngate_margin = -0.5\n");
    let cfg = dir.path().join("strict.toml");
    std::fs::write(&cfg, strict).unwrap();
    let out_dir = dir.path().join("gate");
    let out = bin()
        .args(["coverage", "--config"])
        .arg(&cfg)
        .env("MCCI_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("coverage.csv").exists());
}
