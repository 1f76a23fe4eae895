use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular or nearly singular (smallest singular value {0:e})")]
    Singular(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate fit: fringe amplitude {0:e} is below the detection threshold")]
    DegenerateFit(f64),

    #[error("missing phase for matrix entry ({row}, {col})")]
    MissingPhase { row: usize, col: usize },

    #[error("gauge violation: border entry ({row}, {col}) carries phase {phase}")]
    GaugeViolation { row: usize, col: usize, phase: f64 },

    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded")]
    Unbounded,

    #[error("solver hit the iteration cap ({0} iterations)")]
    IterationCap(usize),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
