use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedVsrError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty cohort")]
    EmptyCohort,

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl FedVsrError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        FedVsrError::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        FedVsrError::Domain(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        FedVsrError::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FedVsrError>;
