//! Command-line drivers for the Prandtl numerical laboratory.
//!
//! Every subcommand resolves a [`config::RunConfig`], creates its output
//! directory, writes a manifest *before* computing, and rewrites the
//! manifest with the outcome when it finishes. Exit codes: `0` success,
//! `1` invalid input, `2` the method left its validity regime.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod output;

use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "prandtl-lab", version, about = "Numerical experiments for the 2-D Prandtl equation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Print the result summary as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Increase log verbosity (`-v` info, `-vv` debug).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Heat-kernel shear flow: u^s, d_y u^s, alpha and diagnostics.
    ShearFlow,
    /// Norm report of a field CSV (default: the zeroth approximation).
    Norms {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Empirical constants of the smoothing-operator laws.
    MollifierCheck {
        /// Fields per corpus.
        #[arg(long, default_value_t = 4)]
        corpus: usize,
        /// Smoothing parameters.
        #[arg(long, value_delimiter = ',', default_values_t = [8.0, 16.0, 32.0])]
        thetas: Vec<f64>,
    },
    /// Linearized solve around the zeroth approximation with a corpus forcing.
    RunLinearized,
    /// The Nash–Moser iteration.
    RunNashMoser,
    /// The direct Picard solver.
    RunOracle,
    /// Norms of the difference of two field CSVs.
    Compare { a: PathBuf, b: PathBuf },
    /// Solution gap over data gap for two perturbation sizes.
    Stability {
        /// Second amplitude (default: half of `perturbation.epsilon`).
        #[arg(long)]
        epsilon_b: Option<f64>,
    },
    /// Nash–Moser runs over a list of values of one parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Epsilon,
    Theta0,
    NT,
    NX,
    NY,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::Theta0 => "theta0",
            SweepParam::NT => "n_t",
            SweepParam::NX => "n_x",
            SweepParam::NY => "n_y",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Usage(String),
    Core(prandtl_core::Error),
    Io(std::io::Error),
    /// A run finished but stopped at a validity gate.
    Gate(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config: {e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Gate(m) => write!(f, "validity gate: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<prandtl_core::Error> for CliError {
    fn from(e: prandtl_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gate(_) => 2,
            CliError::Core(e) if e.is_numerical_gate() => 2,
            _ => 1,
        }
    }
}

pub fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    match &global.config {
        Some(path) => Ok(RunConfig::from_file(path)?),
        None => Ok(RunConfig::default()),
    }
}

/// Run one invocation; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = load_config(&cli.global).and_then(|cfg| commands::dispatch(&cli, &cfg));
    match result {
        Ok(summary) => {
            if cli.global.json {
                println!("{}", serde_json::to_string(&summary).unwrap_or_default());
            } else if !cli.global.quiet {
                print_summary(&summary);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_summary(v: &serde_json::Value) {
    match v.as_object() {
        Some(map) => {
            for (k, v) in map {
                println!("{k}: {v}");
            }
        }
        None => println!("{v}"),
    }
}
