use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum RisError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("time {t} lies outside the load interval [0, {t_final}]")]
    TimeDomain { t: f64, t_final: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    /// The inner solver ran out of iterations. Carries the best iterate seen
    /// so that callers can decide whether the partial result is usable.
    #[error("inner solver stopped after {iters} iterations with residual {residual:.3e}")]
    NoConvergence {
        iters: usize,
        residual: f64,
        best: Box<crate::inner::StepResult>,
    },

    #[error("non-finite value encountered in {0}")]
    Numerical(String),

    #[error("dimension {got} not supported here (maximum {max})")]
    UnsupportedDimension { max: usize, got: usize },

    #[error("malformed trace: {0}")]
    Trace(String),

    #[error("kind mismatch: expected {expected}, got {got}")]
    Kind { expected: String, got: String },

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, RisError>;

impl RisError {
    pub(crate) fn parameter(name: &'static str, reason: impl Into<String>) -> Self {
        RisError::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
