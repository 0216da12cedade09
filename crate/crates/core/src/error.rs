use thiserror::Error;

/// Errors raised by the toolkit. Numerical checks that merely *fail* are
/// reported through verdict types, not through this enum.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hybrid states have different shapes")]
    ShapeMismatch,

    #[error("conditional trace {0:e} is not above tolerance; the induced distribution does not exist")]
    ZeroConditional(f64),

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("truncation exceeded its round guard of {0}")]
    NonTermination(usize),

    #[error("badness register overflow: mass at the top level for w={w}")]
    RegisterOverflow { w: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
