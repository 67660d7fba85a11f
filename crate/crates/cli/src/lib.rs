//! Configuration, command dispatch and report files for `spinesim`.

pub mod commands;
pub mod config;

use std::path::Path;

use thiserror::Error;

pub use commands::{cmd_dichotomy, cmd_simulate, cmd_spectral, cmd_verify, Outcome};
pub use config::{Overrides, RunConfig, Suite};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] spinesim_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectral,
    Simulate,
    Verify,
    Dichotomy,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Loads the config, runs `command` and maps the result to an exit code;
/// messages go to stderr and written files to stdout.
pub fn run(command: Command, config: &Path, overrides: &Overrides) -> i32 {
    let result = RunConfig::load(config, overrides).and_then(|cfg| match command {
        Command::Spectral => cmd_spectral(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::Dichotomy => cmd_dichotomy(&cfg),
    });
    match result {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            if out.passed {
                EXIT_PASS
            } else {
                eprintln!("one or more checks failed");
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
