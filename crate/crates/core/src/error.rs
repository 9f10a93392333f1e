use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural validation failed: {0}")]
    Structural(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("edge density is undefined for {0} in-scope node(s)")]
    DensityUndefined(usize),

    #[error("no nodes in scope")]
    EmptyScope,

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingFailure { epoch: usize, loss: f64 },

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("degenerate probability row {0}: all entries clamp to zero")]
    DegenerateRow(usize),

    #[error("metrics undefined: {0}")]
    UndefinedMetrics(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorCategory::Config,
            Error::Structural(_)
            | Error::Parse { .. }
            | Error::Shape(_)
            | Error::Input(_)
            | Error::Infeasible(_)
            | Error::DensityUndefined(_)
            | Error::EmptyScope
            | Error::UndefinedMetrics(_) => ErrorCategory::Data,
            Error::NonFiniteGradient(_)
            | Error::TrainingFailure { .. }
            | Error::DegenerateReference(_)
            | Error::DegenerateRow(_) => ErrorCategory::Numeric,
            Error::Io { .. } => ErrorCategory::Io,
        }
    }
}
