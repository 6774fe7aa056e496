use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("trajectory diverged at step {step}")]
    Diverged { step: usize },

    #[error("kernel needs about {requested} stored entries, over the budget of {budget}")]
    Capacity { requested: usize, budget: usize },

    #[error("target measure is negative or not finite at point {index}")]
    NegativeMeasure { index: usize },

    #[error("target measure vanishes on every point")]
    DegenerateMeasure,

    #[error("row {row} of the renormalized kernel has zero mass")]
    DegenerateRow { row: usize },

    #[error("point {index} lies in both the A and the B set")]
    OverlappingSets { index: usize },

    #[error("no sampled point falls in the {set} set; sample more densely near it")]
    EmptyBoundary { set: &'static str },

    #[error("linear solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("active grid region does not connect A to B")]
    DisconnectedDomain,

    #[error("escape rate undefined: probability of last hitting A is zero")]
    UndefinedEscapeRate,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
