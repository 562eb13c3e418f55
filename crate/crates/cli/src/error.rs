use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] eittrack::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// Output location cannot be created or written.
    #[error("output directory {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Input { path: String, msg: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn input(path: &Path, msg: impl Into<String>) -> Self {
        Self::Input {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }

    /// 2 for usage and configuration problems, 1 for everything that fails
    /// while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Output { .. } => 2,
            Self::Core(eittrack::Error::Config { .. } | eittrack::Error::Parse { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
