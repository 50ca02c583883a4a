use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("field does not carry a sup-norm bound")]
    MissingFieldBound,

    #[error("operation not available for {0} fields")]
    UnsupportedField(&'static str),

    #[error("kernel is not Hermitian: {0}")]
    NonHermitian(String),

    #[error("field is not antisymmetric: {0}")]
    NotAntisymmetric(String),

    #[error(
        "eigensolver did not converge after {iterations} iterations \
         (best value {value}, residual {residual})"
    )]
    NoConvergence {
        value: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("{size} sites exceed the dense-solver cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("need at least {need} usable points, got {got}")]
    InsufficientPoints { need: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature step {step} exceeds the resolution limit {limit}")]
    UnderResolved { step: f64, limit: f64 },

    #[error("grid is not uniform")]
    NonUniformGrid,

    #[error("sweep aborted at eps = {eps}: {source}")]
    SweepAborted {
        eps: f64,
        #[source]
        source: Box<Error>,
        partial: Box<crate::scaling::EdgeSweep>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
