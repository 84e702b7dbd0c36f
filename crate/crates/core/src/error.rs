use thiserror::Error;

/// Errors raised by the structural evaluations, the discrete operators and
/// the configuration layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Evaluation requested outside the domain where the motility pair is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A motility table or sample produced a non-positive diffusivity.
    #[error("motility gamma({v}) = {value} is not positive")]
    NegativeMotility { v: f64, value: f64 },

    /// One or more configuration fields violate their constraints.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io error: {0}")]
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

pub type Result<T> = std::result::Result<T, Error>;
