use std::path::Path;

use thiserror::Error;

/// Pipeline failure, classified by the exit code it maps to.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad flags or configuration.
    #[error("usage: {0}")]
    Usage(String),
    /// Missing, malformed or unusable input data.
    #[error("data: {0}")]
    Data(String),
    /// Anything else, e.g. an output that cannot be written.
    #[error("internal: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Internal(_) => 3,
        }
    }

    pub fn data(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        PipelineError::Data(format!("{context}: {e}"))
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Internal(format!("cannot write {}: {e}", path.display()))
    }
}
