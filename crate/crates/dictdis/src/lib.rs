//! File formats, checkpoints and subcommands around `dictdis-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod files;

pub use cli::{run, Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};
