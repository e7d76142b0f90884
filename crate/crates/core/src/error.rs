use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point {x} lies outside the domain {domain}")]
    Domain { x: f64, domain: &'static str },

    #[error("truncation {requested} exceeds grid resolution (at most {max} modes)")]
    Aliasing { requested: usize, max: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite kernel value {value} at node pair ({i}, {j})")]
    Assembly { i: usize, j: usize, value: f64 },

    #[error("kernel is not symmetric (max relative asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("refused: {0}")]
    Refused(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn refused(msg: impl Into<String>) -> Self {
        Error::Refused(msg.into())
    }
}
