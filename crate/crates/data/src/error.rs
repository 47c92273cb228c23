use std::path::PathBuf;

use thiserror::Error;

use crate::validate::Violation;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("document `{doc_id}` is invalid: {}", summarize(.violations))]
    Validation { doc_id: String, violations: Vec<Violation> },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

fn summarize(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{:?} at {} ({})", v.code, v.path, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, DataError>;
