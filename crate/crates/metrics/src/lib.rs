//! Evaluation: exact-match entity F1; MUC, B³ and CEAF_e averaged into a
//! chain score; chain-level relation F1; IoU-thresholded grounding F1; and a
//! two-kind error taxonomy per task.

pub mod assign;
pub mod coref;
pub mod entity;
pub mod error;
pub mod grounding;
pub mod prf;
pub mod reference;
pub mod relation;
pub mod report;
pub mod taxonomy;

pub use assign::max_weight_assignment;
pub use coref::{b_cubed, ceaf_alignment, ceaf_e, chain_score, muc, phi4};
pub use entity::{entity_counts, entity_f1};
pub use error::{MetricError, Result};
pub use grounding::{grounding_counts, grounding_f1, iou, match_regions, IOU_THRESHOLD};
pub use prf::{Counts, Prf, RatioPair};
pub use relation::{match_relations, relation_counts, relation_f1, ChainRelation};
pub use report::{evaluate, report_from_tallies, ChainPrf, EvalReport, Tally};
pub use taxonomy::{ErrorPair, ErrorReport, ErrorTaxonomy};
