use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for a {order}-mode tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("mode {0} appears more than once")]
    DuplicateMode(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid embedding dimensions: {0}")]
    InvalidDimensions(String),

    #[error("factor {index} of mode {mode} has norm {norm}, expected unit norm")]
    NonUnitFactor {
        mode: usize,
        index: usize,
        norm: f64,
    },

    #[error("degenerate basis: design matrix has numerical rank {rank} < {expected}")]
    DegenerateBasis { rank: usize, expected: usize },

    #[error("coefficient {index} is zero ({value:e}); cannot rescale factor update")]
    ZeroWeight { index: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("sketch plan has no second stage")]
    MissingSecondStage,

    #[error("invalid sketch plan: {0}")]
    InvalidPlan(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
