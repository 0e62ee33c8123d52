use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt file {}: {msg}", path.display())]
    Corrupt { path: PathBuf, msg: String },
    #[error("shape error in {file}, dimension {dim}: {msg}")]
    Shape { file: String, dim: usize, msg: String },
    #[error("incompatible configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("numerical error: {0}")]
    Core(#[from] nlop::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn shape(file: &str, dim: usize, msg: impl Into<String>) -> Self {
        Self::Shape {
            file: file.to_string(),
            dim,
            msg: msg.into(),
        }
    }

    /// Process exit code of the error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 2,
            Self::Corrupt { .. } => 3,
            Self::Shape { .. } => 4,
            Self::Config(_) => 5,
            Self::Usage(_) => 6,
            Self::Core(_) => 7,
        }
    }
}
