use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),

    #[error("{what} is not positive definite (smallest eigenvalue {lambda_min:.6e})")]
    NotPositiveDefinite { what: &'static str, lambda_min: f64 },

    #[error("function undefined at eigenvalue {0:.6e}")]
    FunctionUndefined(f64),

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal {off:.3e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("algebraic identity check failed for {what}: relative gap {gap:.3e} > {tol:.1e}")]
    IdentityMismatch { what: &'static str, gap: f64, tol: f64 },

    #[error("invalid isometry: |V^T V - I| = {0:.3e}")]
    InvalidIsometry(f64),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("infeasible hypothesis: {0}")]
    InfeasibleHypothesis(String),

    #[error("gave up after {0} rejected samples")]
    RetriesExhausted(usize),

    #[error("unknown check `{0}`")]
    UnknownCheck(String),

    #[error("parse error: {0}")]
    Parse(String),
}
