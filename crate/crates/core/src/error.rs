//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GsoError {
    /// Malformed or inconsistent arguments (dimension mismatches, bad ranges).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Structurally valid input on which the operation is undefined
    /// (zero matrix to normalize, generator that thresholded to nothing).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The simulated process blew past the divergence guard.
    #[error("unstable process: sample norm exceeded {limit:e} at t={t}")]
    Instability { t: usize, limit: f64 },

    /// The identified shift operator has no entries above the support threshold,
    /// so there is nothing to debias.
    #[error("degenerate support: estimated shift operator has an empty support")]
    DegenerateSupport,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed on-disk data (CSV or state checkpoint).
    #[error("parse error in {path}: {reason}")]
    Parse { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, GsoError>;

impl GsoError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        GsoError::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        GsoError::DegenerateInput(msg.into())
    }
}
