use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DedError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DedError {
    /// An argument lies outside the domain of the operation (e.g. θ ∉ Θ, σ ≤ 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Observed data violate the dead-time or ordering constraints.
    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A Fisher matrix is singular or indefinite.
    #[error("conditioning error: {message} (smallest eigenvalue {min_eigenvalue:e})")]
    Conditioning {
        message: String,
        min_eigenvalue: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate template: {0}")]
    DegenerateTemplate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DedError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DedError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            DedError::Config(_) | DedError::Parse(_) | DedError::Domain(_) => 2,
            DedError::DataIntegrity(_) | DedError::InsufficientData(_) | DedError::Io { .. } => 3,
            DedError::Conditioning { .. } | DedError::DegenerateTemplate(_) => 4,
        }
    }
}
