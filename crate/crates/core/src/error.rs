use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("ambient dimension must be at least 3, got {0}")]
    AmbientDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Riesz exponent must satisfy 0 < alpha < d (alpha = {alpha}, d = {dim})")]
    Exponent { alpha: f64, dim: usize },

    /// Kernel evaluated at coincident points without truncation. Kept apart
    /// from floating-point overflow, which never produces this variant.
    #[error("kernel is infinite at coincident points")]
    Singular,

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("external field is not finite at {0}")]
    NonFiniteField(String),

    #[error("field evaluation: {0}")]
    Field(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tensor quadrature needs {terms} terms, above the limit {limit}; use the annealed estimator")]
    QuadratureTooLarge { terms: f64, limit: f64 },

    #[error("{0} is not supported")]
    Unsupported(String),
}
