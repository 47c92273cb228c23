//! Training and evaluation orchestration: run configuration, a two-group
//! Adam optimizer, binary checkpoints, held-out evaluation and seeded
//! experiment sweeps.

pub mod adam;
pub mod check;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod rng;
pub mod render;
pub mod run;
pub mod sweep;
pub mod train;

pub use adam::Adam;
pub use check::{fixture, full_model_gradcheck};
pub use checkpoint::Checkpoint;
pub use config::{DataConfig, LabelConfig, OptimConfig, PathConfig, RunConfig, SweepAxis, SweepConfig, TrainConfig};
pub use error::{Result, TrainError};
pub use eval::{check_labels, evaluate, evaluate_with_threads, predict_corpus};
pub use run::{evaluation_corpus, execute, training_corpus, RunOutcome, RunReport};
pub use sweep::{apply_axis, sweep, SweepPoint, SweepReport};
pub use train::{initial_params, model_for, train, StepLog, Trained};
