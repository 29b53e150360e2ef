use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("profile not positive: rho0 = {value:e} at x3 = {x}")]
    ProfileNotPositive { x: f64, value: f64 },

    #[error("profile not increasing: rho0' = {value:e} at x3 = {x}")]
    ProfileNotIncreasing { x: f64, value: f64 },

    #[error("mesh needs at least 2 elements, got {0}")]
    TooFewElements(usize),

    #[error("non-finite value {value} at x3 = {x}")]
    NonFinite { x: f64, value: f64 },

    #[error("boundary data incompatible with the constrained space: {0}")]
    IncompatibleBoundary(String),

    #[error("matrix not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("singular matrix (zero pivot at row {index})")]
    Singular { index: usize },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("fixed point for j = {j} at k = {k} has residual {residual:e} above tolerance")]
    FixedPointResidual { k: f64, j: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "fixed point gamma_{j}(k, lambda) = lambda not bracketed on [0, {upper}] at k = {k} \
         (gamma_{j}(k, 0) > 0 but no sign change)"
    )]
    NotBracketed { k: f64, j: usize, upper: f64 },

    #[error("already escaped: delta * F(0) = {value:e} exceeds epsilon0 = {epsilon0:e}")]
    AlreadyEscaped { value: f64, epsilon0: f64 },

    #[error("modes do not share one wavevector")]
    MismatchedWavevectors,
}
