use thiserror::Error;

/// Errors produced by the design and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error(
        "matrix is not positive definite (min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e})"
    )]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPositiveSemidefinite { min_eig: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("negative weight {value} at stream {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("no active streams: every whitened singular value or weight is zero")]
    NoActiveStreams,

    #[error(
        "division near zero at stream {stream}: vartheta {vartheta:e} against {denominator_term:e}"
    )]
    DivisionNearZero {
        stream: usize,
        vartheta: f64,
        denominator_term: f64,
    },

    #[error("root bracket failure: residual does not change sign on [{lo:e}, {hi:e}]")]
    RootBracketFailure { lo: f64, hi: f64 },

    #[error("invalid stream parameters: {0}")]
    InvalidStreamParameters(String),

    #[error("constraint violated: vartheta {vartheta:e} below max stream term {max_term:e}")]
    ConstraintViolated { vartheta: f64, max_term: f64 },

    #[error("maximum iterations exceeded ({iterations})")]
    MaxIterationsExceeded { iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
