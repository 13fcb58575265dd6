//! Command-line front end: reads an experiment configuration, runs one
//! subcommand and writes CSV/JSON results.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::RunContext;
use crate::config::{parse_theta_list, ExperimentConfig};
pub use crate::error::CliError;

/// Environment variable overriding the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "BACKHEAT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "backheat", version, about = "Backward parabolic equation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated theta values: noise levels for `reconstruct`,
    /// Sobolev orders for `lp-analyze`.
    #[arg(long = "theta-list", global = true, value_name = "CSV")]
    pub theta_list: Option<String>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Dyadic and paraproduct estimate sweeps into a constants ledger.
    LpAnalyze,
    /// Weighted energy estimate on a generated solution corpus.
    VerifyEnergy,
    /// Noise sweep of the truncated backward reconstruction and rate fit.
    Reconstruct,
    /// Forward solve from a random initial state.
    ForwardSolve,
    /// Tabulate the weight functions.
    WeightsTable,
}

fn context(cli: &Cli) -> Result<RunContext, CliError> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let theta_override = cli.theta_list.as_deref().map(parse_theta_list).transpose()?;
    Ok(RunContext { seed: cli.seed.unwrap_or(config.seed), config, out_dir, theta_override })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let ctx = context(cli)?;
    match cli.command {
        Command::LpAnalyze => commands::lp_analyze(&ctx),
        Command::VerifyEnergy => commands::verify_energy(&ctx),
        Command::Reconstruct => commands::reconstruct(&ctx),
        Command::ForwardSolve => commands::forward_solve(&ctx),
        Command::WeightsTable => commands::weights_table(&ctx),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_CONFIG } else { error::EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // logging is configured from flags only; a second init in tests is harmless
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli) {
        Ok(()) => error::EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            eprintln!("backheat: {e}");
            e.exit_code()
        }
    }
}
