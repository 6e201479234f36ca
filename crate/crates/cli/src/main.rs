use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcci_cli::{
    cmd_calibrate, cmd_coverage, cmd_demo, CliError, DemoOptions, RunOptions, DEFAULT_SEED,
    OUT_DIR_ENV,
};
use mcci_core::Mode;

#[derive(Parser)]
#[command(name = "mcci", version, about = "Confidence sets for noisy matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one 40x40 rank-2 instance end to end.
    Demo {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "calibrated")]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Sampling rate n / (m1 m2).
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Constants file from `calibrate`; defaults to the shipped one.
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Run the coverage grid and write CSV and JSON reports.
    Coverage(GridArgs),
    /// Calibrate C and z_cal and write a constants file.
    Calibrate(GridArgs),
}

#[derive(Args)]
struct GridArgs {
    /// TOML config; defaults to the shipped desk-scale grid.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory; overrides MCCI_OUT_DIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write a per-trial CSV.
    #[arg(long)]
    dump_trials: bool,
    /// Constants file from `calibrate` (coverage only).
    #[arg(long)]
    constants: Option<PathBuf>,
}

impl GridArgs {
    fn options(self) -> RunOptions {
        RunOptions {
            config: self.config,
            seed: self.seed,
            mode: self.mode,
            out: self.out,
            threads: self.threads,
            dump_trials: self.dump_trials,
            constants: self.constants,
            env_out: std::env::var(OUT_DIR_ENV).ok(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Demo {
            seed,
            mode,
            sigma,
            p,
            constants,
        } => {
            let opts = DemoOptions {
                seed,
                mode,
                sigma,
                p,
                constants,
            };
            cmd_demo(&opts, &mut stdout).map(|_| ())
        }
        Command::Coverage(args) => cmd_coverage(&args.options(), &mut stdout)?.gate(),
        Command::Calibrate(args) => cmd_calibrate(&args.options(), &mut stdout).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
