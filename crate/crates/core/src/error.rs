use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the region where a model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// An iterative solver gave up. `residuals` holds the last residual vector.
    #[error("numeric failure: {message} (last residuals {residuals:?})")]
    NumericFailure { message: String, residuals: Vec<f64> },

    #[error("under-determined problem: {0}")]
    Underdetermined(String),

    #[error("phase undefined: |H| = 0")]
    UndefinedPhase,

    #[error("invalid network topology: {0}")]
    Topology(String),

    #[error("analysis window too short: {periods:.2} periods of the base tone (need {required})")]
    WindowTooShort { periods: f64, required: usize },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field, reason: reason.into() }
    }

    pub fn is_numeric_failure(&self) -> bool {
        matches!(self, Error::NumericFailure { .. })
    }
}
