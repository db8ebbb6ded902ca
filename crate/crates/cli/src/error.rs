use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config value for `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("unknown preset {0:?} (expected example1a, example1b or example2)")]
    UnknownPreset(String),
    #[error("{0}")]
    Argument(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] eeqcbf_core::Error),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Core(eeqcbf_core::Error::Feasibility(_)) => 2,
            _ => 1,
        }
    }
}
