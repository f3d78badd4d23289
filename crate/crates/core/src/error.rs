use thiserror::Error;

/// Everything that can go wrong while parsing, compiling, evaluating or checking kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("point {0} lies outside the domain")]
    OutsideDomain(String),

    #[error("non-finite value while evaluating {0}")]
    NonFinite(String),

    #[error("division by (numerically) zero while evaluating {0}")]
    Pole(String),

    #[error("power with exponent {0} requires a kernel known to be non-vanishing")]
    PowerNotWellDefined(f64),

    #[error("kernel vanishes at a sample point; power with exponent {0} is not well defined")]
    PowerBaseVanishes(f64),

    #[error("rescaling weight vanishes near sample point {0}")]
    WeightVanishes(String),

    #[error("degenerate diagonal: K(x,x) = {value:e} at {point}")]
    DegenerateDiagonal { point: String, value: f64 },

    #[error("insufficient boundary clearance {clearance:e} for step {step:e}")]
    InsufficientClearance { clearance: f64, step: f64 },

    #[error("duplicate points at indices {0} and {1}")]
    DuplicatePoints(usize, usize),

    #[error("Gram matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("non-positive monomial norm for degree {0}")]
    NonPositiveNorm(usize),

    #[error("negative radicand {0:e}: Cauchy-Schwarz violated, kernel is not positive semi-definite")]
    NegativeRadicand(f64),

    #[error("empty grid")]
    EmptyGrid,

    #[error("profile undefined at r = {0}")]
    ProfileUndefined(f64),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Numerical failures, as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Syntax { .. }
                | Error::UnknownName(_)
                | Error::DimensionMismatch { .. }
                | Error::Unsupported(_)
                | Error::InvalidArgument(_)
                | Error::EmptyGrid
                | Error::DuplicatePoints(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
