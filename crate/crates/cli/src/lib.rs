//! Command-line front end for the vectorial Deffuant simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, Settings};
pub use error::CliError;
