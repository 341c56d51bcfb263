//! `cpt` — scenario runner for the CPT adaptive-tuning simulation.
//!
//! Subcommands: `spectrum` (one sweep at a voltage), `adapt` (full adaptive
//! run), `baseline` (traditional calibration study), `compare` (matched
//! budget adaptive vs. traditional across four scenarios). Exit codes: 0 on
//! success, 2 on configuration errors, 3 on runtime errors.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ScenarioConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Scenario configuration file (JSON); defaults to the built-in
    /// noiseless linear scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the RNG seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Parser)]
#[command(name = "cpt", version, about = "CPT spectroscopy and adaptive Bayesian tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Acquire one spectrum at a fixed voltage and write it as CSV.
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        /// Commanded voltage in volts.
        #[arg(long)]
        voltage: f64,
    },
    /// Run the adaptive Bayesian loop and write the trace and summary.
    Adapt {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the traditional calibrate-and-invert study.
    Baseline {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the four-scenario adaptive vs. traditional comparison.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load(common: &CommonArgs) -> Result<ScenarioConfig, CliError> {
    Ok(ScenarioConfig::load(common.config.as_deref())?.with_seed(common.seed))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Spectrum { common, voltage } => {
            if !voltage.is_finite() {
                return Err(CliError::Config("--voltage must be finite".into()));
            }
            let cfg = load(common)?;
            commands::cmd_spectrum(&cfg, *voltage, &common.out)
        }
        Command::Adapt { common } => {
            let cfg = load(common)?;
            commands::cmd_adapt(&cfg, &common.out)
        }
        Command::Baseline { common } => {
            let cfg = load(common)?;
            commands::cmd_baseline(&cfg, &common.out)
        }
        Command::Compare { common } => {
            let cfg = load(common)?;
            commands::cmd_compare(&cfg, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
