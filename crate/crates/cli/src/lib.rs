//! Configuration, scenarios and table output behind the `qfi` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod scenarios;

pub use config::{ExperimentConfig, Scenario};
pub use error::CliError;
pub use output::Table;

/// Builds the global thread pool from `QFI_THREADS` when it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("QFI_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("QFI_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
