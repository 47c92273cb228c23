//! Multimodal document corpora: entity mentions, coreference chains,
//! chain-level relations and per-frame grounded regions over a token
//! sequence and a sequence of patch-feature frames.

pub mod error;
pub mod io;
pub mod oracle;
pub mod prediction;
pub mod schema;
pub mod split;
pub mod synth;
pub mod tags;
pub mod validate;
pub mod vocab;

pub use error::{DataError, Result};
pub use io::{parse_corpus, parse_corpus_str, to_jsonl, write_corpus};
pub use prediction::{chain_pairs, decode_chains, Prediction};
pub use schema::{
    BBox, Chain, Corpus, Document, Entity, EntityType, Frame, GroundingType, LabelSets, ModalityMask, Provenance,
    Region, RelationTriple,
};
pub use split::{assign_modality_regime, regime_counts, split_corpus, Splits};
pub use synth::{generate, GenConfig};
pub use validate::{validate, Violation, ViolationCode};
