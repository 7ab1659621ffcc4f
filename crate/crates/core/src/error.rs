use thiserror::Error;

/// Errors raised by the library and surfaced by the command-line tool.
#[derive(Debug, Error)]
pub enum GkbmError {
    /// Parameters or inputs that fail validation.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A problem that is valid in principle but too large to solve exactly.
    #[error("refused: {0}")]
    TooLarge(String),

    /// An instance whose contents contradict the model.
    #[error("corrupt instance: {0}")]
    Corrupt(String),

    #[error("quadrature did not reach tolerance {tol:e} on [{a}, {b}] (estimated error {estimate:e})")]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl GkbmError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        GkbmError::Invalid(msg.into())
    }

    pub fn corrupt(msg: impl Into<String>) -> Self {
        GkbmError::Corrupt(msg.into())
    }

    /// True when the error stems from bad user input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GkbmError::Invalid(_) | GkbmError::TooLarge(_) | GkbmError::Corrupt(_) | GkbmError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GkbmError>;
