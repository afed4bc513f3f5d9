use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why a feasibility problem was declared infeasible.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// The iteration budget ran out without an accepted state.
    Budget { iterations: usize },
    /// A Lagrangian bound on the objective over the exact feasible set
    /// fell below the target.
    DualBound { bound: f64 },
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Budget { iterations } => {
                write!(f, "iteration budget of {iterations} exhausted")
            }
            Certificate::DualBound { bound } => write!(f, "dual bound {bound:.6e}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("truncated exponential has non-positive trace {0:e}; norm bound too small")]
    NonPositiveTrace(f64),

    #[error("symmetric eigendecomposition did not converge")]
    Eigen,

    #[error("infeasible at objective target {gamma_target:.6e}: {certificate}")]
    Infeasible {
        gamma_target: f64,
        certificate: Certificate,
    },

    #[error("no convergence within {0} outer iterations")]
    NonConvergence(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input is not precise enough to round: {bad} coordinates off target, at most {limit} allowed")]
    NotPrecise { bad: usize, limit: f64 },

    #[error("enumeration supports at most {max} variables, got {dim}")]
    TooLarge { dim: usize, max: usize },

    #[error("unknown instance tag `{0}`")]
    UnknownTag(String),
}
