use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("correlation coefficient {rho} outside [0, 1)")]
    InvalidCorrelation { rho: f64 },

    #[error("constellation must contain at least one point")]
    EmptyConstellation,

    #[error("at least one user is required")]
    NoUsers,

    #[error("users disagree on constellation size: expected {expected}, found {found}")]
    MismatchedPoints { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric at ({row}, {col}): asymmetry {asymmetry:e}")]
    NotSymmetric { row: usize, col: usize, asymmetry: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("joint dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("noise variance must be positive and finite, got {0}")]
    InvalidNoiseVariance(f64),

    #[error("transmit power must be nonnegative and finite, got {0}")]
    InvalidPower(f64),

    #[error("mixture mean {0} is not finite")]
    NonFiniteMean(f64),

    #[error("Monte Carlo estimate needs at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },

    #[error("quadrature supports at most {max} components, got {n}")]
    TooManyComponents { n: usize, max: usize },

    #[error("quadrature did not converge after {panels} panels (last change {last_delta:e} bits)")]
    QuadratureDiverged { panels: usize, last_delta: f64 },

    #[error("spectra have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("spectrum is not sorted in descending order")]
    UnsortedSpectrum,

    #[error("spectra are not comparable: totals {total_a} and {total_b} differ")]
    NotComparable { total_a: f64, total_b: f64 },

    #[error("invalid user subset {mask:#b} for {users} users")]
    InvalidSubset { mask: u32, users: usize },

    #[error("link configuration has {found} correlation models for {users} users")]
    CorrelationCount { users: usize, found: usize },

    #[error("at least one realization is required")]
    NoRealizations,
}

pub type Result<T> = std::result::Result<T, Error>;
