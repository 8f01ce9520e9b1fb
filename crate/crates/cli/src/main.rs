//! `sbl`: fit sparse Bayesian learning and lasso estimators on CSV data, run
//! simulation scenarios and the verification experiments.

mod commands;
mod config;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sbl_core::sim::Method;
use sbl_core::SblError;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "sbl",
    version,
    about = "Sparse Bayesian learning with EM, hard thresholding and a lasso baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit SBL (and its thresholded version) to a design and response CSV.
    Fit(Common),
    /// Run a simulation scenario, or a grid of them when the config has a `sweep` section.
    Simulate(Common),
    /// Run the null-retention and error-bound experiments.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Only the null-retention experiment.
        #[arg(long, conflicts_with = "error_bound")]
        null_retention: bool,
        /// Only the error-bound and sign-recovery experiment.
        #[arg(long)]
        error_bound: bool,
        /// Replications for every experiment that runs.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Lasso path with cross-validated penalty.
    Lasso(Common),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Design matrix CSV, n rows by p columns.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Response CSV, one value per row.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to SBL_THREADS, then to the number of CPUs.
    #[arg(long, env = "SBL_THREADS")]
    pub threads: Option<usize>,
    /// Hold the noise variance at this value instead of estimating it.
    #[arg(long)]
    pub fixed_sigma2: Option<f64>,
    /// Threshold constants searched by BIC, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    /// Methods to run, comma separated: sbl, sbl-thresholded, lasso.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub method: Option<Vec<Method>>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: SblError| e.to_string())
}

/// Failure report written to stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub status: &'static str,
    pub stage: &'static str,
    pub kind: String,
    pub message: String,
}

impl Failure {
    pub fn new(stage: &'static str, err: SblError) -> Self {
        Self {
            status: "error",
            stage,
            kind: err.kind().to_string(),
            message: err.to_string(),
        }
    }
}

pub trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<SblError>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(stage, e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(c) => commands::fit(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Verify {
            common,
            null_retention,
            error_bound,
            reps,
        } => commands::verify(
            &common,
            !error_bound || null_retention,
            !null_retention || error_bound,
            reps,
        ),
        Command::Lasso(c) => commands::lasso(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).expect("failure report serializes"));
            ExitCode::FAILURE
        }
    }
}
