//! `friction-walk`: command-line front end for the quantum-friction jump
//! process simulator.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or
//! configuration error, 3 resource limit hit.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Failure of a command, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    CheckFailed,
    Resource(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::CheckFailed => 1,
            CliError::Usage(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl From<friction_walk_core::Error> for CliError {
    fn from(e: friction_walk_core::Error) -> Self {
        if e.is_resource_limit() {
            CliError::Resource(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Resource(msg) => eprintln!("resource limit: {msg}"),
                CliError::CheckFailed => eprintln!("one or more checks failed"),
            }
            ExitCode::from(e.code())
        }
    }
}
