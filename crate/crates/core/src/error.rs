use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is singular (pivot {pivot:e} below tolerance)")]
    SingularMatrix { pivot: f64 },

    #[error("matrix is not positive semidefinite (pivot {pivot:e} at index {index})")]
    NotPsd { index: usize, pivot: f64 },

    #[error("matrix is not positive definite")]
    NotPd,

    #[error("eigenvalue iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension {n} exceeds the cap of {cap}")]
    DimensionTooLarge { n: usize, cap: usize },

    #[error("multi-index has total order 0")]
    EmptyIndex,

    #[error("determinant {value:e} is not positive")]
    NonPositiveDeterminant { value: f64 },

    #[error("row/column {site} of the kernel is not identically zero")]
    AnchorNotNull { site: usize },

    #[error("chain is not transient: {0}")]
    NotTransient(String),

    #[error("chain is not recurrent: {0}")]
    NotRecurrent(String),

    #[error("stopping rule cannot be reached almost surely: {0}")]
    UnreachableStop(String),

    #[error("h(x) = g(x, a) vanishes at reachable state {state}")]
    ZeroHarmonic { state: usize },

    #[error("kernel is not infinitely divisible (no signature makes S G^-1 S an M-matrix)")]
    NotInfinitelyDivisible,

    #[error("index {beta} is not of the form 2/m for a positive integer m")]
    UnsupportedIndex { beta: f64 },

    #[error("density {rho} is below the critical density {rho_c}")]
    SubcriticalDensity { rho: f64, rho_c: f64 },

    #[error("critical density integral diverges in dimension {d}")]
    DivergentIntegral { d: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
