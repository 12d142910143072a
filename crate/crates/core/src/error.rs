use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum DrfError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle returned NaN/Inf at constraint {i}, scenario {r}")]
    OracleFailure { i: usize, r: usize },

    #[error("solver failure at iteration {t}: {msg}")]
    SolverFailure { t: usize, msg: String },

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DrfError>;
