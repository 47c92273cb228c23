use std::path::PathBuf;

use mmie_data::DataError;
use mmie_metrics::MetricError;
use mmie_model::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite gradient for `{param}` at step {step} (document `{doc}`)")]
    NonFiniteGradient { param: String, step: u64, doc: String },
    #[error("non-finite loss at step {step} (document `{doc}`)")]
    NonFiniteLoss { step: u64, doc: String },
}

impl TrainError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Non-finite losses, gradients or values, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss { .. } => true,
            TrainError::Model(e) => e.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
