//! Command-line harness for the Volterra large-deviations toolkit.
//!
//! An experiment is a single TOML file; every run writes CSV artifacts, a
//! copy of the config and a manifest with the config hash, seed and version.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{parse_config, parse_config_at, Command, ExperimentConfig};
pub use error::{Category, CliError, ConfigIssue, Result};
