use std::path::Path;

use thiserror::Error;

/// Operational failures; each maps to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: {reason}")]
    Io { path: String, reason: String },

    #[error(transparent)]
    Core(#[from] wsobolev::Error),

    #[error("hypotheses not met: {0}")]
    Hypotheses(String),
}

impl CliError {
    pub fn field(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }
}
