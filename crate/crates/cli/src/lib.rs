//! Experiment configuration, file formats and command implementations for
//! the `cotrain` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_csv;
pub mod error;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
