//! Command line front-end: model serving, patch sampling, field derivation,
//! the scaling benchmark and demo data generation.

pub mod args;
pub mod bench;
pub mod demo;
pub mod fields;
pub mod sample;
pub mod serve;

use std::path::Path;

use thiserror::Error;

pub use args::Cli;

/// Failure of a command, carrying its exit code class.
#[derive(Debug, Error)]
pub enum CliError {
    /// The inputs are well-formed but break a model or field contract.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] rasterflow::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    use args::Command;
    match cli.command {
        Command::Serve(a) => serve::cmd_serve(&a.into_job()?).map(drop),
        Command::Sample(a) => sample::cmd_sample(&a).map(drop),
        Command::DeriveFields(a) => fields::cmd_derive_fields(&a),
        Command::Benchmark(a) => bench::cmd_benchmark(&a),
        Command::MakeDemo(a) => demo::cmd_make_demo(&a),
    }
}

pub(crate) fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("missing file: {}", path.display())))
    }
}
