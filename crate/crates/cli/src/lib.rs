//! Command-line front end: loads an [`ExperimentConfig`], runs one of the
//! experiments and writes CSV/JSON artifacts.
//!
//! Exit codes: 0 when every gate passes, 1 when a statistical or exact gate
//! fails, 2 for configuration, precondition and I/O errors.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::Outcome;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Girsanov,
    Bridge,
    Validate,
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> CliResult<Outcome> {
    match command {
        Command::Simulate => commands::simulate(cfg),
        Command::Girsanov => commands::girsanov(cfg).map(|(o, _)| o),
        Command::Bridge => commands::bridge(cfg).map(|(o, _)| o),
        Command::Validate => commands::validate(cfg).map(|(o, _)| o),
    }
}

/// Process exit code for a finished or failed run.
pub fn exit_code(result: &CliResult<Outcome>) -> i32 {
    match result {
        Ok(o) if o.pass => 0,
        Ok(_) => 1,
        Err(e) => e.exit_code(),
    }
}
