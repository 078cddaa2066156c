use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for {len} particles")]
    Index { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "root finding did not converge after {iterations} iterations (last residual {residual:e})"
    )]
    Solver { iterations: usize, residual: f64 },

    #[error("quadrature did not converge: estimate {estimate}, gap between levels {gap:e}")]
    Quadrature { estimate: f64, gap: f64 },

    #[error("step at t = {time} failed after {halvings} halvings (smallest gap {gap:e})")]
    Step { time: f64, halvings: u32, gap: f64 },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
