use std::path::PathBuf;

use crate::iteration::Trace;
use crate::operators::FixedPointRef;

pub type Result<T, E = SkmError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SkmError {
    /// A point lies outside the interior of the generating function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The deterministic reference solver ran out of iterations. Carries the
    /// best iterate seen.
    #[error("no convergence after {iterations} iterations (best residual {:.3e})", best.residual_norm)]
    NoConvergence {
        iterations: usize,
        best: Box<FixedPointRef>,
    },

    /// An iterate left the finite range. Carries the trace recorded up to the
    /// last valid iterate.
    #[error("iteration diverged at step {step}")]
    Diverged { step: usize, trace: Box<Trace> },

    #[error("trace too short: requested {requested}, available {available}")]
    InsufficientTrace { requested: usize, available: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SkmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SkmError::Io {
            path: path.into(),
            source,
        }
    }
}
