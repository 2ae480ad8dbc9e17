use thiserror::Error;

/// Errors raised across lifting, synthesis, certification and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("disturbance input matrix E_{step} is rank deficient (sigma_min/sigma_max = {ratio:.3e})")]
    RankDeficientE { step: usize, ratio: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("benchmark and response operators were built from different uncertainty samples")]
    SampleMismatch,

    #[error("symmetric eigensolver did not converge")]
    EigenFailure,

    #[error("scenario program is infeasible: {0}")]
    Infeasible(String),

    #[error("conic solver failed with status {status}: {detail}")]
    SolverFailure { status: String, detail: String },

    #[error("argument out of domain: {0}")]
    DomainError(String),

    #[error("trajectory inconsistent with the model at step {step} (residual {residual:.3e})")]
    InconsistentTrajectory { step: usize, residual: f64 },

    #[error("state-feedback realization needs p == n (got n = {n}, p = {p})")]
    NotSquare { n: usize, p: usize },

    #[error("closed-loop state map is singular (condition number {condition:.3e})")]
    SingularMap { condition: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::DimensionMismatch {
        context: context.to_string(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
