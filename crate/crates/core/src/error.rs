use thiserror::Error;

/// Errors produced anywhere in the simulator and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or port bases of combined objects do not agree.
    #[error("structural error: {0}")]
    Structure(String),

    /// A calibration fit ended with residuals above threshold.
    #[error("calibration failed: {message} (scaled residuals {residuals:?})")]
    Calibration { message: String, residuals: Vec<f64> },

    /// A curve fit did not converge.
    #[error("fit failed: {message} (best weighted residual {best_residual:.6e})")]
    Fit { message: String, best_residual: f64 },

    /// Input text could not be parsed. `line` is 1-based.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// Operation requested on a state that was never initialized.
    #[error("state error: {0}")]
    State(String),

    /// Requested problem exceeds the brute-force size limits.
    #[error("size error: {0}")]
    Size(String),

    /// A ratio with a non-positive denominator or numerator.
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn structure(msg: impl Into<String>) -> Error {
    Error::Structure(msg.into())
}
