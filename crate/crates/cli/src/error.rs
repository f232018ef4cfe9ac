use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("digest mismatch: {0}")]
    Digest(String),
    #[error("target cost {target} not reached (best {best})")]
    TargetNotMet { target: u64, best: u64 },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Other(_) => 1,
            CliError::Parse { .. } => 3,
            CliError::Digest(_) => 4,
            CliError::TargetNotMet { .. } => 5,
        }
    }

    pub fn parse(path: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Parse { path: path.to_string(), msg: e.to_string() }
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
