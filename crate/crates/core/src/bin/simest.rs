use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use simest::harness::{dump_matrices, emit_csv, validate, write_rows, Scenario, ScenarioConfig};
use simest::Error;

/// SIM-assisted uplink channel estimation sweeps.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured Monte Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output CSV file for `run`, output directory for `dump-matrices`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the sweep described by a config file or preset name.
    Run { config: String },
    /// Runs the built-in consistency checks.
    Validate,
    /// Writes W, W_bs, P, R, sqrt(R) and R_iso as re,im CSV.
    DumpMatrices { config: String },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(cli: &Cli, source: &str) -> Result<ScenarioConfig, Error> {
    let mut config = ScenarioConfig::resolve(source)?;
    if let Some(seed) = cli.seed {
        config.sweep.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.sweep.trials = trials;
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Run { config } => {
            let config = load(cli, config)?;
            let rows = Scenario::build(&config)?.sweep()?;
            match &cli.out {
                Some(path) => emit_csv(&rows, path)?,
                None => write_rows(&rows, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate => {
            let report = validate(cli.seed.unwrap_or(1))?;
            println!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            })
        }
        Command::DumpMatrices { config } => {
            let config = load(cli, config)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("matrices"));
            let scenario = Scenario::build(&config)?;
            for name in dump_matrices(&scenario, &dir)? {
                println!("{}", dir.join(name).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io { .. } | Error::Geometry(_) | Error::PilotLength { .. } => {
                    ExitCode::from(EXIT_CONFIG)
                }
                _ => ExitCode::from(EXIT_FAILURE),
            }
        }
    }
}
