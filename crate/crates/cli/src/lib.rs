//! Configurable experiment runner: shifted-digit clustering, feature
//! extraction benchmarks, patch-size sweeps and distance comparisons.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{load_config, parse_config, Config, ExperimentKind, LoadedConfig};
pub use error::CliError;
pub use experiments::run;
pub use output::Manifest;
