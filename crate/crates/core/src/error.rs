use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("wrong family: {0}")]
    Family(String),
    #[error("criterion inapplicable: {0}")]
    Inapplicable(String),
    #[error("unbounded inverse: no bracket for level {level} in [1e-12, 1e12]")]
    UnboundedInverse { level: f64 },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = core::result::Result<T, Error>;
