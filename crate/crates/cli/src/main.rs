//! `htl`: configuration-driven runner for norms, decompositions, operator
//! suites and the verification battery.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{RunConfig, Task};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("numerical error: {0}")]
    Numerical(#[from] htl_core::Error),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "htl", version, about = "Hermite Triebel-Lizorkin norms, decompositions and audits")]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    task: Task,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for report.json and the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Refinement factor of the stability comparisons.
    #[arg(long)]
    refine: Option<usize>,
    /// Seed of the randomized suites.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    htl_core::suites::apply_thread_cap().map_err(|e| CliError::config(htl_core::suites::THREADS_ENV, e))?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if let Some(r) = cli.refine {
        cfg.refine = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let resolved = cfg.resolve(cli.task)?;
    run::run(&resolved)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("htl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
