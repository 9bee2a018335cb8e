//! Command-line pipeline and HTTP service for the ucbmir retrieval engine.

pub mod commands;
pub mod config;
pub mod error;
pub mod service;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::{Category, CliError};
