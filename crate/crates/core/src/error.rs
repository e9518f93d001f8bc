use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("blow-up at t = {time:.6e}: max |v| = {max_abs:.3e} (dt or N misconfigured)")]
    BlowUp { time: f64, max_abs: f64 },

    #[error("time {0} is not on the trajectory grid")]
    OffGrid(f64),

    #[error("barrier search exhausted: no grid value of eta up to {0} meets the 1/4 target")]
    SearchExhausted(f64),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
