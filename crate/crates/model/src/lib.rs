//! A multimodal document information-extraction model: hierarchical text
//! and frame encoders, latent cross-modal fusion, missing-modality feature
//! construction, and heads for entities, coreference, relations and
//! per-frame grounding.
//!
//! Parameters live in one [`mmie_core::ParamTree`] under the prefixes
//! `encoder.text`, `encoder.frames`, `dffm.*`, `mmcm.*` and `heads.*`.

pub mod config;
pub mod crf;
pub mod dffm;
pub mod encoders;
pub mod error;
pub mod heads;
pub mod mmcm;
pub mod model;

pub use config::{DffmConfig, Dims, FramePositions, LossConfig, LossWeights, MmcmConfig, ModelConfig, VaeMode};
pub use encoders::{LevelFeatures, Levels};
pub use error::{ModelError, Result};
pub use heads::Losses;
pub use model::{forward, fused_features, init_params, loss_and_grads, loss_and_grads_traced, predict, PairMode};

/// Parameter groups, one per module, e.g. for stratified gradient checks.
pub const MODULE_PREFIXES: [&str; 12] = [
    "encoder.text.",
    "encoder.frames.",
    "dffm.g2x.",
    "dffm.x2g.",
    "dffm.mix.",
    "dffm.pos",
    "mmcm.t2g.",
    "mmcm.g2t.",
    "heads.crf.",
    "heads.coref.",
    "heads.rel.",
    "heads.gro.",
];

/// Whether a parameter belongs to the encoder learning-rate group.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("encoder.")
}
