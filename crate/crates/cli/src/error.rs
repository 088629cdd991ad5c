use std::path::{Path, PathBuf};

use lstm_rf::ErrorCategory;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lstm_rf::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io { .. } => ErrorCategory::Io,
            CliError::Config(_) | CliError::Usage(_) => ErrorCategory::Validation,
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.category())
    }
}

pub fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Io => 2,
        ErrorCategory::Validation => 3,
        ErrorCategory::Serialization => 4,
        ErrorCategory::Numerical => 5,
    }
}
