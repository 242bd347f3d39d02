use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the crate.
///
/// The CLI maps [`Error::Config`], [`Error::Parse`] and [`Error::Validation`]
/// to exit code 2 and every other variant to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("division by a series with zero constant term")]
    DivisionByZero,

    #[error("derivative order {0} exceeds the cap of {max}", max = crate::jets::MAX_ORDER)]
    OrderTooHigh(usize),

    #[error("invalid auction: {0}")]
    InvalidAuction(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature degenerate: {0}")]
    Quadrature(String),

    #[error("finite-difference stencil leaves (0,1): {0}")]
    Stencil(String),

    #[error("at grid index {index} (u = {u}): {source}")]
    AtGridPoint {
        index: usize,
        u: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by the user's configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Validation(_) | Error::InvalidAuction(_) => true,
            Error::AtGridPoint { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
