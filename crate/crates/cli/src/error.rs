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
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] cgmot::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.into(), line, message: message.into() }
    }

    /// 0 success, 1 solver failure or non-convergence, 2 I/O, 3 configuration.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => 2,
            CliError::Config(_) => 3,
            CliError::Solver(e) => match e {
                cgmot::Error::Config(_) | cgmot::Error::Domain(_) | cgmot::Error::Shape(_) => 3,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
