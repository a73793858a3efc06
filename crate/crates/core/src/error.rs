use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by lattice construction, spectra, extraction and testing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An input point lies outside the map's domain or on a non-differentiable point.
    #[error("domain error: {0}")]
    Domain(String),
    /// The orbit collapsed to an attracting fixed point.
    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),
    /// Two bit sequences of different lengths were combined.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    /// Input is too short (or too small a sample) for the requested computation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Both series have to vary for a correlation to exist.
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    /// No independence window passed within the retry bound.
    #[error("independence test failed on all {windows} windows (last statistic D = {last_statistic})")]
    RetryExhausted { windows: usize, last_statistic: f64 },
    /// A node index outside the lattice (1-based).
    #[error("node ({u}, {v}) is outside a {rows}x{cols} lattice")]
    NodeOutOfRange {
        u: usize,
        v: usize,
        rows: usize,
        cols: usize,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
