use thiserror::Error;

/// Errors raised while building models or running the gating machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("distributions live on different grids")]
    GridMismatch,

    #[error("variance on axis {axis} must be positive, got {value}")]
    NonPositiveVariance { axis: usize, value: f64 },

    #[error("weights are not on the simplex: {0}")]
    NotOnSimplex(String),

    #[error("infeasible step problem at step {k}, state {state}, action {action}: {reason}")]
    Infeasible {
        k: usize,
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("solver did not converge at {failures:?} (step, state) pairs")]
    NotConverged { failures: Vec<(usize, usize)> },

    #[error("brute-force oracle supports at most {max} primitives, got {got}")]
    OracleTooLarge { max: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
