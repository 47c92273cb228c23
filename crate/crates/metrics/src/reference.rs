//! Slow, obviously-correct reference implementations used to verify the fast
//! metrics: exhaustive search and pixel counting.

use mmie_data::{BBox, Region};

use crate::coref::phi4;
use crate::grounding::{iou, IOU_THRESHOLD};
use crate::relation::ChainRelation;

/// IoU by counting the centers of an `n × n` pixel grid over the unit square.
pub fn pixel_iou(a: &BBox, b: &BBox, n: usize) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let axis = |lo0: f64, hi0: f64, lo1: f64, hi1: f64| -> Vec<(bool, bool)> {
        (0..n)
            .map(|i| {
                let c = (i as f64 + 0.5) / n as f64;
                (c >= lo0 && c < hi0, c >= lo1 && c < hi1)
            })
            .collect()
    };
    let xs = axis(ax0, ax1, bx0, bx1);
    let ys = axis(ay0, ay1, by0, by1);
    let (mut inter, mut union) = (0u64, 0u64);
    for &(ya, yb) in &ys {
        for &(xa, xb) in &xs {
            let (ina, inb) = (xa && ya, xb && yb);
            inter += u64::from(ina && inb);
            union += u64::from(ina || inb);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Best total over all injective maps from the smaller side, given a
/// pairwise score.
fn best_injection(rows: usize, cols: usize, score: &dyn Fn(usize, usize) -> f64) -> f64 {
    fn go(r: usize, rows: usize, cols: usize, used: &mut Vec<bool>, score: &dyn Fn(usize, usize) -> f64) -> f64 {
        if r == rows {
            return 0.0;
        }
        // leave row r unmatched
        let mut best = go(r + 1, rows, cols, used, score);
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                best = best.max(score(r, c) + go(r + 1, rows, cols, used, score));
                used[c] = false;
            }
        }
        best
    }
    go(0, rows, cols, &mut vec![false; cols], score)
}

/// Maximum φ4 alignment by exhaustive search.
pub fn ceaf_alignment_brute<M: Ord>(gold: &[Vec<M>], pred: &[Vec<M>]) -> f64 {
    best_injection(gold.len(), pred.len(), &|g, p| phi4(&gold[g], &pred[p]))
}

/// Size of a maximum one-to-one matching of predicted to gold triples under
/// the chain-intersection rule.
pub fn relation_matches_brute<M: PartialEq>(gold: &[ChainRelation<M>], pred: &[ChainRelation<M>]) -> usize {
    best_injection(pred.len(), gold.len(), &|p, g| if pred[p].matches(&gold[g]) { 1.0 } else { 0.0 }) as usize
}

/// Size of a maximum one-to-one matching of predicted to gold regions where a
/// pair counts iff same frame, same type and IoU above the threshold.
pub fn region_matches_brute(gold: &[Region], pred: &[Region]) -> usize {
    let ok = |p: usize, g: usize| {
        let (p, g) = (&pred[p], &gold[g]);
        p.frame == g.frame && p.vtype == g.vtype && iou(&p.bbox(), &g.bbox()) > IOU_THRESHOLD
    };
    best_injection(pred.len(), gold.len(), &|p, g| if ok(p, g) { 1.0 } else { 0.0 }) as usize
}
