use std::fmt;

use serde::{Deserialize, Serialize};

/// Entity mention types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "TIME")]
    Time,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [EntityType::Per, EntityType::Loc, EntityType::Org, EntityType::Time];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Loc => "LOC",
            EntityType::Org => "ORG",
            EntityType::Time => "TIME",
        }
    }

    pub fn grounding(self) -> Option<GroundingType> {
        match self {
            EntityType::Per => Some(GroundingType::Per),
            EntityType::Loc => Some(GroundingType::Loc),
            EntityType::Org => Some(GroundingType::Org),
            EntityType::Time => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Visual region types. TIME has no visual counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroundingType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "ORG")]
    Org,
}

impl GroundingType {
    pub const ALL: [GroundingType; 3] = [GroundingType::Per, GroundingType::Loc, GroundingType::Org];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroundingType::Per => "PER",
            GroundingType::Loc => "LOC",
            GroundingType::Org => "ORG",
        }
    }
}

/// A continuous token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub etype: EntityType,
}

impl Entity {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A coreference cluster, as indices into the document's entity list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chain {
    pub members: Vec<usize>,
}

impl Chain {
    pub fn new(members: Vec<usize>) -> Self {
        Self { members }
    }
}

/// A relation between two chains (by chain index).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationTriple {
    pub sub: usize,
    pub obj: usize,
    #[serde(rename = "type")]
    pub rtype: String,
}

/// A typed, normalized, center-format box on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub frame: usize,
    #[serde(rename = "type")]
    pub vtype: GroundingType,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Region {
    pub fn bbox(&self) -> BBox {
        BBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w,
            h: self.h,
        }
    }
}

/// Center-format normalized box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// `(x0, y0, x1, y1)`
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        const TOL: f64 = 1e-9;
        let fields = [self.cx, self.cy, self.w, self.h];
        if !fields.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) || self.w <= 0.0 || self.h <= 0.0 {
            return false;
        }
        let (x0, y0, x1, y1) = self.corners();
        x0 >= -TOL && y0 >= -TOL && x1 <= 1.0 + TOL && y1 <= 1.0 + TOL
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// The box intersected with the unit square, kept at least `min_side`
    /// wide and tall.
    pub fn clipped(&self, min_side: f64) -> Self {
        let (x0, y0, x1, y1) = self.corners();
        let clip = |lo: f64, hi: f64| {
            let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
            if hi - lo >= min_side {
                (lo, hi)
            } else {
                let mid = ((lo + hi) / 2.0).clamp(min_side / 2.0, 1.0 - min_side / 2.0);
                (mid - min_side / 2.0, mid + min_side / 2.0)
            }
        };
        let ((x0, x1), (y0, y1)) = (clip(x0, x1), clip(y0, y1));
        Self::from_corners(x0, y0, x1, y1)
    }
}

/// One video frame as a grid of precomputed patch features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub patches: Vec<Vec<f64>>,
}

/// Which input modalities reach the encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityMask {
    Full,
    NoText,
    NoVideo,
}

impl ModalityMask {
    pub const ALL: [ModalityMask; 3] = [ModalityMask::Full, ModalityMask::NoText, ModalityMask::NoVideo];

    pub fn as_str(self) -> &'static str {
        match self {
            ModalityMask::Full => "full",
            ModalityMask::NoText => "no_text",
            ModalityMask::NoVideo => "no_video",
        }
    }

    pub fn has_text(self) -> bool {
        self != ModalityMask::NoText
    }

    pub fn has_video(self) -> bool {
        self != ModalityMask::NoVideo
    }
}

/// The unit of training and evaluation.
///
/// Gold annotations are kept whatever the modality mask says; the mask only
/// controls which inputs the model may read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<String>,
    pub frames: Vec<Frame>,
    pub entities: Vec<Entity>,
    pub chains: Vec<Chain>,
    pub relations: Vec<RelationTriple>,
    pub regions: Vec<Region>,
    pub modality_mask: ModalityMask,
}

impl Document {
    /// Patches per frame, if the document has frames.
    pub fn patches_per_frame(&self) -> Option<usize> {
        self.frames.first().map(|f| f.patches.len())
    }

    pub fn patch_width(&self) -> Option<usize> {
        self.frames.first().and_then(|f| f.patches.first()).map(Vec::len)
    }

    /// Chain index for every entity (assumes the partition invariant holds).
    pub fn chain_of_entity(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.entities.len()];
        for (c, chain) in self.chains.iter().enumerate() {
            for &m in &chain.members {
                if let Some(slot) = out.get_mut(m) {
                    *slot = c;
                }
            }
        }
        out
    }

    /// The gold region on `frame`, if any.
    pub fn region_on(&self, frame: usize) -> Option<&Region> {
        self.regions.iter().find(|r| r.frame == frame)
    }
}

/// Label inventories used to size the model's output layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSets {
    pub entities: Vec<EntityType>,
    pub relations: Vec<String>,
    pub grounding: Vec<GroundingType>,
}

impl LabelSets {
    pub fn with_relations(relations: Vec<String>) -> Self {
        Self {
            entities: EntityType::ALL.to_vec(),
            relations,
            grounding: GroundingType::ALL.to_vec(),
        }
    }

    /// Whether every label in `other` is known here.
    pub fn covers(&self, other: &LabelSets) -> bool {
        other.entities.iter().all(|e| self.entities.contains(e))
            && other.relations.iter().all(|r| self.relations.contains(r))
            && other.grounding.iter().all(|g| self.grounding.contains(g))
    }

    pub fn relation_index(&self, label: &str) -> Option<usize> {
        self.relations.iter().position(|r| r == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generated { seed: u64, config: serde_json::Value },
    File { path: String },
    Derived { from: Box<Provenance>, note: String },
    InMemory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub labels: LabelSets,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus whose relation label set is the sorted set of labels
    /// used by `documents`, extended by `extra_relations`.
    pub fn from_documents(documents: Vec<Document>, extra_relations: &[String], provenance: Provenance) -> Self {
        let mut relations: Vec<String> = documents
            .iter()
            .flat_map(|d| d.relations.iter().map(|r| r.rtype.clone()))
            .chain(extra_relations.iter().cloned())
            .collect();
        relations.sort();
        relations.dedup();
        Self {
            documents,
            labels: LabelSets::with_relations(relations),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Same labels and provenance lineage, different documents.
    pub fn derive(&self, documents: Vec<Document>, note: impl Into<String>) -> Self {
        Self {
            documents,
            labels: self.labels.clone(),
            provenance: Provenance::Derived {
                from: Box::new(self.provenance.clone()),
                note: note.into(),
            },
        }
    }
}
