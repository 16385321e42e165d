use thiserror::Error;

/// Errors raised by the imaging primitives, detectors, scorer and generators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input is smaller than the minimum the operation needs.
    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("image holds no complete 8x8 block")]
    EmptyGrid,

    /// A metric has no defined value (empty evaluated region).
    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// No triplet can be formed because one patch class is empty.
    #[error("no triplets: {0}")]
    NoTriplets(String),

    #[error("class consistency violated: {0}")]
    ClassMismatch(String),

    /// A synthesis spec failed validation; `field` names the offending key path.
    #[error("invalid spec field `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
