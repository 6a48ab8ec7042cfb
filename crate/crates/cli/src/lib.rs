//! Batch commands and the HTTP service built on `eliminators-core`.

pub mod case;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod report;
pub mod service;
pub mod training;

pub use commands::{run, Cli, Command, Output};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
