//! Library side of the `bdproc` command-line tool, so that commands can be
//! driven from tests with in-memory output.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod io;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<bdproc_core::Error> for CliError {
    fn from(e: bdproc_core::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bdproc",
    version,
    about = "Linear birth-and-death process: probabilities, simulation and fitting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition probability p(j | i, t)
    Prob(ProbArgs),
    /// Simulate trajectories exactly
    Simulate(SimulateArgs),
    /// Maximum likelihood fit of (λ, μ) to a series or event file
    Fit(FitArgs),
    /// Fit the log-linear dose-response model
    FitGlm(FitGlmArgs),
    /// Monte Carlo bias and RMSE of the estimators
    Mc(McArgs),
    /// Relative error of log p against the high-precision reference
    ErrorScan(ErrorScanArgs),
}

#[derive(Debug, Args)]
pub struct ProbArgs {
    #[arg(long)]
    pub i: u64,
    #[arg(long)]
    pub j: u64,
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub mu: f64,
    /// Print log p instead of p
    #[arg(long)]
    pub log: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub i0: u64,
    #[arg(long)]
    pub tend: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub mu: f64,
    #[arg(long, env = "BDPROC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated sampling times starting at 0 (default: 0 and tend)
    #[arg(long, value_delimiter = ',')]
    pub sample: Option<Vec<f64>>,
    /// Print every event instead of sampled sizes
    #[arg(long, conflicts_with = "sample")]
    pub events: bool,
    /// Also print births, deaths and total time lived, to stderr
    #[arg(long)]
    pub stats: bool,
    /// Independent series to simulate (sampled output only)
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Series CSV (`series_id,time,count`), or an event CSV with --continuous
    pub file: PathBuf,
    /// Treat the file as a continuously observed event history
    #[arg(long)]
    pub continuous: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, env = "BDPROC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Drop series already extinct at their first sampling time
    #[arg(long)]
    pub condition_on_survival: bool,
}

#[derive(Debug, Args)]
pub struct FitGlmArgs {
    /// Dose CSV (`id,dose,time,n0,nt`)
    pub file: PathBuf,
    /// Fix both dose slopes at zero
    #[arg(long)]
    pub no_slopes: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub n0: u64,
    /// Sampling intervals over the horizon
    #[arg(long = "intervals", short = 'S', default_value_t = 1)]
    pub intervals: usize,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub mu: f64,
    /// Series fitted jointly per simulation
    #[arg(long, short = 'k', default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 10_000)]
    pub sims: usize,
    #[arg(long, env = "BDPROC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Keep simulations that are extinct at the first sampling time
    #[arg(long)]
    pub no_conditioning: bool,
    /// Omit the header line
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct ErrorScanArgs {
    /// 1: naive summation on the μ sweep, 3: recurrence on the μ sweep,
    /// 4: recurrence on the (λ, μ) plane
    #[arg(long)]
    pub figure: u32,
    /// Override the method implied by --figure
    #[arg(long, value_parser = ["naive", "ttrr"])]
    pub method: Option<String>,
    /// Working precision of the reference in bits
    #[arg(long, default_value_t = 256)]
    pub bits: u32,
}

/// Parse `args` (program name first) and run the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match commands::dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code
        }
    }
}
