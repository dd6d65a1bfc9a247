use thiserror::Error;

/// Errors raised by the library. Variants map onto the failure modes of each
/// operation; none of them is used for acceptance assertions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported derivative: {0}")]
    UnsupportedDerivative(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("kernel singular at coincident points")]
    Singularity,
    #[error("window error: {0}")]
    Window(String),
    #[error("degenerate ellipsoid: rho = {rho} <= r = {r}")]
    DegenerateEllipsoid { rho: f64, r: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unsupported norm pair {0:?} -> {1:?}")]
    UnsupportedPair(String, String),
    #[error("not contractive: norm {0} >= 1")]
    NotContractive(f64),
    #[error("missing norm: {0}")]
    MissingNorm(String),
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("lambda^2 lies on the spectrum")]
    OnSpectrum,
    #[error("Krylov breakdown: {0}")]
    KrylovBreakdown(String),
    #[error("grid too large for this path: {0}")]
    GridTooLarge(String),
    #[error("serialization: {0}")]
    Serialization(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
