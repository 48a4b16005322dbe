use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty sample space")]
    EmptySampleSpace,

    #[error("split time {time} is not a partition point")]
    NotAPartitionPoint { time: f64 },

    #[error("prefix has {got} steps but the split point needs {expected}")]
    PrefixLength { expected: usize, got: usize },

    #[error("control set is empty")]
    EmptyControlSet,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("foot point escapes the domain at x = {x:?}, control = {control:?}, v = {v:?}")]
    FootEscape {
        x: Vec<f64>,
        control: Vec<f64>,
        v: Vec<f64>,
    },

    #[error("CFL condition violated (ratio {ratio:.4}); use a time step of at most {suggested_delta:.6e}")]
    Cfl { ratio: f64, suggested_delta: f64 },

    #[error("blow-up: state {state:?} left the enlarged domain at s = {time}")]
    BlowUp { time: f64, state: Vec<f64> },

    #[error("domain error: {0}")]
    Domain(String),

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

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
