//! Experiment harness for the point-cloud autoencoder toolkit: dataset
//! generation, training with best-epoch-on-test selection, metric
//! evaluation, single- vs multi-head comparison tables, decoder parameter
//! audits, and depth/head sweeps with CSV and SVG output.

pub mod audit;
pub mod cli;
pub mod compare;
pub mod config;
pub mod evalcmd;
pub mod generate;
pub mod plot;
pub mod runrecord;
pub mod sweep;
pub mod train;

use std::fmt;

/// Harness-level errors carrying the process exit code:
/// 2 config, 3 numeric failure, 4 I/O, 1 everything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<prae_core::Error> for CliError {
    fn from(e: prae_core::Error) -> Self {
        use prae_core::Error as E;
        match &e {
            E::Config(_) => CliError::Config(e.to_string()),
            E::NonFinite(_) | E::Convergence(_) => CliError::Numeric(e.to_string()),
            E::Io(_) | E::Checkpoint(_) | E::Data(_) => CliError::Io(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    use clap::Parser;
    let args = cli::Cli::parse();
    init_thread_pool();
    match cli::dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Caps data parallelism via the PRAE_THREADS environment variable.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("PRAE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
