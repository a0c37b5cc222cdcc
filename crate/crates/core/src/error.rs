//! Crate-wide error type.

use std::path::Path;

use thiserror::Error;

use crate::llm::BackendError;
use crate::memory::MemoryError;
use crate::prompt::PromptError;
use crate::tools::ToolError;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot read fixture `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse fixture `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid fixture store: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a runtime fault.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::NotFound(_)
            | Error::Conflict(_)
            | Error::Memory(_)
            | Error::Tool(_)
            | Error::Prompt(_) => true,
            Error::Store(e) => !matches!(e, StoreError::Io { .. }),
            Error::Backend(e) => e.is_configuration(),
            Error::Io { .. } => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
