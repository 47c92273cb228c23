use mmie_core::NumericError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("document `{doc}`: {message}")]
    Input { doc: String, message: String },
}

impl ModelError {
    pub(crate) fn input(doc: &str, message: impl Into<String>) -> Self {
        Self::Input {
            doc: doc.to_string(),
            message: message.into(),
        }
    }

    /// Whether the failure is a non-finite value rather than a
    /// configuration or input problem.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ModelError::Numeric(NumericError::NonFinite { .. }))
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Lets model code run inside closures that speak [`NumericError`], such as
/// gradient checks.
impl From<ModelError> for NumericError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numeric(n) => n,
            other => NumericError::Config(other.to_string()),
        }
    }
}
