use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not Hermitian (max |rho - rho^dag| = {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("ket has zero norm")]
    ZeroNorm,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("measurement matrix is singular (rank {rank} < 81)")]
    IllPosed { rank: usize },

    #[error("all coincidence counts are zero")]
    NoCounts,

    #[error("quadrature grid too small: half extent {0} w0 < 6 w0")]
    GridTooSmall(f64),

    #[error("target {target} outside achievable range ({low}, {high})")]
    Unachievable { target: f64, low: f64, high: f64 },

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
