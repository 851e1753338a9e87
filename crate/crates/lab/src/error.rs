use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{origin}: field `{field}`: {message}")]
    Config { origin: String, field: String, message: String },
    #[error("{}: file not found", path.display())]
    NotFound { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A data file does not match its schema; `location` names the line, column or field.
    #[error("{}: {location}: {message}", path.display())]
    Schema { path: PathBuf, location: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] crossing_core::Error),
    /// Campaign stopped early; completed trials are kept in `journal`.
    #[error("campaign aborted: {message}; completed trials preserved in {}", journal.display())]
    Aborted { message: String, journal: PathBuf },
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            LabError::NotFound { path: path.to_path_buf() }
        } else {
            LabError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn schema(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Schema { path: path.to_path_buf(), location: location.into(), message: message.into() }
    }
}
