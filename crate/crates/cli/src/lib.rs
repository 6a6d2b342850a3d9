//! Experiment runner for adaptive clustering diffusion networks: config
//! ingestion, seeded Monte Carlo trials, theory reports and CSV/JSON output.

pub mod commands;
pub mod config;
mod error;
pub mod experiment;

pub use error::{CliError, CliResult};
