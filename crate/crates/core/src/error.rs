use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("duplicate mode {0} in multilinear product")]
    DuplicateMode(usize),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid rank: {0}")]
    InvalidRank(String),

    #[error("columns are not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),

    #[error("response domain violation at index {index}: {message}")]
    Domain { index: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty candidate set after filtering invalid ranks")]
    EmptyGrid,

    #[error("response error undefined: zero-variance input")]
    ZeroVariance,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
