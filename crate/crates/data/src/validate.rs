//! Structural invariants of a [`Document`], reported as data.

use serde::{Deserialize, Serialize};

use crate::schema::Document;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyId,
    EntityRange,
    EntityOverlap,
    ChainEmpty,
    ChainIndex,
    ChainPartition,
    RelationIndex,
    SelfRelation,
    DuplicateRelation,
    RegionFrame,
    BoxRange,
    RaggedFrames,
    NonFiniteFeature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// JSON-style field path, e.g. `entities[2].end`.
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

/// Every violated invariant of `doc`; empty iff the document is valid.
pub fn validate(doc: &Document) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Vec::new();
    let n_tokens = doc.tokens.len();

    if doc.id.is_empty() {
        out.push(Violation::new(EmptyId, "id", "document id is empty"));
    }

    for (i, e) in doc.entities.iter().enumerate() {
        if e.start >= e.end || e.end > n_tokens {
            out.push(Violation::new(
                EntityRange,
                format!("entities[{i}]"),
                format!("span [{}, {}) invalid for {n_tokens} tokens", e.start, e.end),
            ));
        }
    }
    let mut order: Vec<usize> = (0..doc.entities.len()).collect();
    order.sort_by_key(|&i| (doc.entities[i].start, doc.entities[i].end));
    for pair in order.windows(2) {
        let (a, b) = (&doc.entities[pair[0]], &doc.entities[pair[1]]);
        if b.start < a.end {
            out.push(Violation::new(
                EntityOverlap,
                format!("entities[{}]", pair[1]),
                format!("overlaps entities[{}]", pair[0]),
            ));
        }
    }

    let mut owner: Vec<Option<usize>> = vec![None; doc.entities.len()];
    for (c, chain) in doc.chains.iter().enumerate() {
        if chain.members.is_empty() {
            out.push(Violation::new(ChainEmpty, format!("chains[{c}]"), "chain has no members"));
        }
        for (j, &m) in chain.members.iter().enumerate() {
            let path = format!("chains[{c}][{j}]");
            match owner.get_mut(m) {
                None => out.push(Violation::new(ChainIndex, path, format!("entity index {m} out of range"))),
                Some(Some(prev)) => out.push(Violation::new(
                    ChainPartition,
                    path,
                    format!("entity {m} already belongs to chains[{prev}]"),
                )),
                Some(slot) => *slot = Some(c),
            }
        }
    }
    for (i, o) in owner.iter().enumerate() {
        if o.is_none() {
            out.push(Violation::new(
                ChainPartition,
                format!("entities[{i}]"),
                "entity belongs to no chain",
            ));
        }
    }

    let n_chains = doc.chains.len();
    for (i, r) in doc.relations.iter().enumerate() {
        if r.sub >= n_chains || r.obj >= n_chains {
            out.push(Violation::new(
                RelationIndex,
                format!("relations[{i}]"),
                format!("chain index out of range for {n_chains} chains"),
            ));
        }
        if r.sub == r.obj {
            out.push(Violation::new(SelfRelation, format!("relations[{i}]"), "sub == obj"));
        }
        if doc.relations[..i].contains(r) {
            out.push(Violation::new(DuplicateRelation, format!("relations[{i}]"), "duplicate triple"));
        }
    }

    for (i, r) in doc.regions.iter().enumerate() {
        if r.frame >= doc.frames.len() {
            out.push(Violation::new(
                RegionFrame,
                format!("regions[{i}].frame"),
                format!("frame {} out of range for {} frames", r.frame, doc.frames.len()),
            ));
        }
        if !r.bbox().is_valid() {
            out.push(Violation::new(
                BoxRange,
                format!("regions[{i}]"),
                format!("box ({}, {}, {}, {}) outside the unit square", r.cx, r.cy, r.w, r.h),
            ));
        }
    }

    if let (Some(n_p), Some(width)) = (doc.patches_per_frame(), doc.patch_width()) {
        for (f, frame) in doc.frames.iter().enumerate() {
            if frame.patches.len() != n_p || frame.patches.iter().any(|p| p.len() != width) {
                out.push(Violation::new(
                    RaggedFrames,
                    format!("frames[{f}].patches"),
                    format!("expected {n_p} patches of width {width}"),
                ));
            }
            if frame.patches.iter().flatten().any(|v| !v.is_finite()) {
                out.push(Violation::new(
                    NonFiniteFeature,
                    format!("frames[{f}].patches"),
                    "non-finite patch feature",
                ));
            }
        }
    }
    out
}
