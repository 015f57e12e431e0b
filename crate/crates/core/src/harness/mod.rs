//! Configuration loading, multi-seed experiments and CSV output.

pub mod config;
pub mod experiment;

pub use config::{load_config, parse_config, ConfigError, Overrides, RunConfig};
pub use experiment::{run_experiment, ExperimentError, ExperimentSummary};
