//! Brute-force decoder for synthetic documents. It reads only the tokens and
//! frames and inverts every planting rule of [`crate::synth`], so on
//! generated data it reproduces the gold annotation exactly. It serves as the
//! perfect-prediction fixture for metric and evaluation tests.

use crate::prediction::{chain_pairs, Prediction};
use crate::schema::{BBox, Chain, Document, Entity, GroundingType, Region, RelationTriple};
use crate::synth::{grid_side, pair_selected, patch_inside, relation_label, GenConfig};
use crate::tags;
use crate::vocab::{token_id, VocabLayout};

pub fn predict(doc: &Document, config: &GenConfig) -> Prediction {
    let layout = VocabLayout::new(config.vocab);
    let ids: Vec<usize> = doc.tokens.iter().map(|t| token_id(t, config.vocab)).collect();

    // (i) maximal same-type runs; the generator always closes a mention
    // with a filler token
    let mut entities: Vec<Entity> = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        let Some(t) = layout.type_of(id) else { continue };
        match entities.last_mut() {
            Some(e) if e.end == i && e.etype == t => e.end = i + 1,
            _ => entities.push(Entity { start: i, end: i + 1, etype: t }),
        }
    }

    // (ii) identical surface form = same chain
    let mut forms: Vec<&[usize]> = Vec::new();
    let mut chains: Vec<Chain> = Vec::new();
    for (m, e) in entities.iter().enumerate() {
        let form = &ids[e.start..e.end];
        match forms.iter().position(|f| *f == form) {
            Some(c) => chains[c].members.push(m),
            None => {
                forms.push(form);
                chains.push(Chain::new(vec![m]));
            }
        }
    }

    // (iii) relation rule over head tokens
    let mut relations = Vec::new();
    for a in 0..chains.len() {
        for b in a + 1..chains.len() {
            let (ea, eb) = (&entities[chains[a].members[0]], &entities[chains[b].members[0]]);
            if ea.etype == eb.etype {
                continue;
            }
            let (ha, hb) = (forms[a][0], forms[b][0]);
            if !pair_selected(ha, hb, config.relation_rate) {
                continue;
            }
            let rtype = relation_label((ha + hb) % config.relation_labels);
            relations.push(RelationTriple { sub: a, obj: b, rtype: rtype.clone() });
            relations.push(RelationTriple { sub: b, obj: a, rtype });
        }
    }

    // (iv) best-contrast grid rectangle per frame
    let regions = doc
        .frames
        .iter()
        .enumerate()
        .filter_map(|(f, frame)| {
            let side = grid_side(frame.patches.len())?;
            let (vtype, b) = best_rectangle(&frame.patches, side)?;
            Some(Region { frame: f, vtype, cx: b.cx, cy: b.cy, w: b.w, h: b.h })
        })
        .collect();

    Prediction {
        tags: tags::encode(&entities, ids.len()).into_iter().map(tags::tag_name).collect(),
        mentions: entities.clone(),
        coref_pairs: chain_pairs(&chains),
        entities,
        chains,
        relations,
        relation_chains: None,
        regions,
    }
}

/// Exhaustive search over grid rectangles and grounding types maximizing
/// `Σ_inside (x[type] − 1/2)`; a positive optimum means a blob is present.
fn best_rectangle(patches: &[Vec<f64>], side: usize) -> Option<(GroundingType, BBox)> {
    let s = side as f64;
    let mut best: Option<(f64, GroundingType, BBox)> = None;
    for vtype in GroundingType::ALL {
        let k = vtype.index();
        if patches.iter().any(|p| p.len() <= k) {
            return None;
        }
        for bw in 1..=side {
            for bh in 1..=side {
                for y0 in 0..=side - bh {
                    for x0 in 0..=side - bw {
                        let b = BBox {
                            cx: (2 * x0 + bw) as f64 / (2.0 * s),
                            cy: (2 * y0 + bh) as f64 / (2.0 * s),
                            w: bw as f64 / s,
                            h: bh as f64 / s,
                        };
                        let score: f64 = (0..patches.len())
                            .filter(|&p| patch_inside(p, side, &b))
                            .map(|p| patches[p][k] - 0.5)
                            .sum();
                        if best.as_ref().is_none_or(|(s0, _, _)| score > *s0) {
                            best = Some((score, vtype, b));
                        }
                    }
                }
            }
        }
    }
    best.filter(|(score, _, _)| *score > 0.0).map(|(_, t, b)| (t, b))
}
