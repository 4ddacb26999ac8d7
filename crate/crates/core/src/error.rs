use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: {what} (expected {expected}, got {got})")]
    Size {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} diverged (|value| = {magnitude})")]
    Diverged { what: &'static str, magnitude: f64 },

    #[error("target BER {target} not bracketed by the OSNR grid; extend the grid")]
    NotBracketed { target: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short stable identifier for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Size { .. } => "size",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Diverged { .. } => "diverged",
            Error::NotBracketed { .. } => "not_bracketed",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
