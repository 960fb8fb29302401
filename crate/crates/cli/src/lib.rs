//! Command-line front end: reads a run configuration, dispatches a
//! subcommand and writes CSV/JSON artifacts into the output directory.
//!
//! Exit codes: `0` success, `1` invalid input (configuration, flags or
//! usage), `2` numerical failure. Diagnostics go to standard error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

pub use config::{parse_config, ConfigErrors, RunConfig};

/// Success.
pub const EXIT_OK: i32 = 0;
/// Invalid configuration, flags or usage.
pub const EXIT_INVALID: i32 = 1;
/// A numerical routine failed.
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Config(#[from] ConfigErrors),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(#[from] lobexit::Error),

    /// A check ran to completion but found violations.
    #[error("check failed: {0}")]
    Check(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Invalid(_) => EXIT_INVALID,
            CliError::Numerical(_) | CliError::Check(_) | CliError::Io { .. } => EXIT_NUMERICAL,
        }
    }
}

/// Optimal liquidation in a resilient limit order book.
#[derive(Debug, Parser)]
#[command(name = "lobexit", version, about)]
pub struct Cli {
    /// Run configuration (flat `section.key = value` file).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(short, long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Overrides `numerics.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides `numerics.threads` (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the intervention boundary: boundary.csv, boundary.json.
    Boundary,
    /// Follow the optimal strategy: strategy.csv, strategy.json.
    Strategy(StateArgs),
    /// Closed-form value, path performance, residuals, utility: value.json.
    Value(StateArgs),
    /// Sample HJB residuals: hjb.json (exit 2 on violations).
    HjbCheck(HjbArgs),
    /// Dynamic-programming oracle and comparison: oracle_grid.csv, oracle.json.
    Oracle(OracleArgs),
    /// Monte Carlo expected utility of the optimal strategy: simulate.json.
    Simulate(SimulateArgs),
    /// The four example boundaries (BM/LVG x A in {1e-3, 1e-2}).
    #[command(name = "reproduce-figure2")]
    ReproduceFigure2,
}

#[derive(Debug, Clone, Default, Args)]
pub struct StateArgs {
    /// Initial holding; defaults to `agent.y0`.
    #[arg(long, allow_negative_numbers = true)]
    pub y0: Option<f64>,
    /// Initial book state; defaults to `agent.z0`.
    #[arg(long, allow_negative_numbers = true)]
    pub z0: Option<f64>,
    /// Largest integration step in time.
    #[arg(long)]
    pub dt_max: Option<f64>,
    /// Give up after this much time.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HjbArgs {
    /// Number of sample points; defaults to `numerics.hjb_points`.
    #[arg(long)]
    pub points: Option<usize>,
    /// Normalised residual tolerance; defaults to `numerics.hjb_tol`.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub nz: Option<usize>,
    /// Use the fixed-time-step wait instead of node-to-node recovery.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub ymax: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    /// Jumps smaller than this are folded into the diffusion.
    #[arg(long)]
    pub eps_trunc: Option<f64>,
    /// Time step of the cash integral.
    #[arg(long)]
    pub dt: Option<f64>,
    #[command(flatten)]
    pub state: StateArgs,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("lobexit: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
