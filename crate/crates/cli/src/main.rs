//! `glv-econ`: runs the wealth models, sweeps, fits and the Lotka-Volterra
//! and city-size dynamics from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 a fit did not converge (its output is still written).

mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    NotConverged(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::NotConverged(m) => m,
        }
    }
}

impl From<glv_econ::io::IoError> for CliError {
    fn from(e: glv_econ::io::IoError) -> Self {
        use glv_econ::io::IoError;
        match e {
            IoError::File { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GLV_ECON_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("GLV_ECON_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Fit(a) => commands::fit(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Lv(a) => commands::lv(a),
        Command::City(a) => commands::city(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glv-econ: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
