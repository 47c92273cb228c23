use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{side} chains are not a partition: {detail}")]
    NotPartition { side: &'static str, detail: String },
    #[error("{side} region on frame {frame} has an invalid box ({cx}, {cy}, {w}, {h})")]
    InvalidBox {
        side: &'static str,
        frame: usize,
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
    },
    #[error("{side} references mention or chain {index} which does not exist")]
    Index { side: &'static str, index: usize },
    #[error("no documents to evaluate")]
    Empty,
}

pub type Result<T> = std::result::Result<T, MetricError>;
