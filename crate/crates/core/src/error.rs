use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter vector: {0}")]
    InvalidParameter(String),

    #[error("design point {index} lies outside the design region: {detail}")]
    OutOfRegion { index: usize, detail: String },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("design singular for the base linear model")]
    SingularBaseDesign,

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("probability {0} outside (0, 1)")]
    Probability(f64),

    #[error("prior support incompatible with model: {0}")]
    Support(String),

    #[error("quadrature construction failed: {0}")]
    Quadrature(String),

    #[error("ill-conditioned information matrix (rcond estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("emulator: {0}")]
    Emulator(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
