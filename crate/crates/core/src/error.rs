use thiserror::Error;

use crate::sdp::SolverStatus;

pub type Result<T> = std::result::Result<T, QotError>;

#[derive(Debug, Error)]
pub enum QotError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid dimension {0}: must be positive")]
    InvalidDimension(usize),

    #[error("entries: expected {expected} entries for the given dim, got {actual}")]
    EntryCount { expected: usize, actual: usize },

    #[error("not Hermitian: max asymmetry |m - m^dagger| = {max_asymmetry:e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("not positive semidefinite: min eigenvalue {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("trace is {trace}, expected 1")]
    TraceNotOne { trace: f64 },

    #[error("amplitudes not normalized: sum |a_i|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank-one factorization precondition violated: marginal ranks are A={rank_a}, B={rank_b}")]
    RankPrecondition { rank_a: usize, rank_b: usize },

    #[error("substate trace {trace} exceeds 1")]
    TraceTooLarge { trace: f64 },

    #[error("states are identical up to a global phase; the rotation axis is undefined")]
    IdenticalStates,

    #[error("{name} = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid SDP problem: {0}")]
    InvalidProblem(String),

    #[error("solver finished with status {status:?} (gap {gap:e}, primal residual {primal_residual:e})")]
    Solver {
        status: SolverStatus,
        gap: f64,
        primal_residual: f64,
    },

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
