use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// Ill-formed input file; `line` is 1-based when known.
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse { path: PathBuf, line: Option<usize>, message: String },
    #[error("{0}")]
    Config(String),
    /// Inputs that are individually fine but do not fit together.
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] dictdis_core::Error),
}

impl CliError {
    /// Stable, machine-readable error class printed before the message.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::Mismatch(_) => "mismatch",
            CliError::Model(dictdis_core::Error::InvalidConfig(_)) => "config",
            CliError::Model(_) => "model",
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}
