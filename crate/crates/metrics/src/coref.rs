//! Coreference scores over chains of mention keys. In gold-pairs evaluation
//! both sides share the gold mention universe; otherwise mentions are keyed
//! by span, so a predicted mention without a gold twin (or the reverse)
//! simply fails to overlap and is charged against precision (recall).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use crate::assign::max_weight_assignment;
use crate::error::{MetricError, Result};
use crate::prf::{Prf, RatioPair};

/// Link-based score.
pub fn muc_counts<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<RatioPair> {
    let gold_of = owner_map(gold, "gold")?;
    let pred_of = owner_map(pred, "predicted")?;
    // |K| - |p(K)|, mentions missing from the other side count as singletons
    let links = |chains: &[Vec<M>], other: &BTreeMap<M, usize>| -> (f64, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for k in chains {
            let mut parts = BTreeSet::new();
            let mut missing = 0usize;
            for m in k {
                match other.get(m) {
                    Some(c) => {
                        parts.insert(*c);
                    }
                    None => missing += 1,
                }
            }
            num += (k.len() - parts.len() - missing) as f64;
            den += (k.len() - 1) as f64;
        }
        (num, den)
    };
    let (r_num, r_den) = links(gold, &pred_of);
    let (p_num, p_den) = links(pred, &gold_of);
    Ok(RatioPair { p_num, p_den, r_num, r_den })
}

/// Mention-based score.
pub fn b_cubed_counts<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<RatioPair> {
    let gold_of = owner_map(gold, "gold")?;
    let pred_of = owner_map(pred, "predicted")?;
    let side = |chains: &[Vec<M>], own: &BTreeMap<M, usize>, other: &BTreeMap<M, usize>| {
        let mut num = 0.0;
        for (m, &c) in own {
            if let Some(&o) = other.get(m) {
                let k = &chains[c];
                let overlap = k.iter().filter(|x| other.get(*x) == Some(&o)).count();
                num += overlap as f64 / k.len() as f64;
            }
        }
        (num, own.len() as f64)
    };
    let (r_num, r_den) = side(gold, &gold_of, &pred_of);
    let (p_num, p_den) = side(pred, &pred_of, &gold_of);
    Ok(RatioPair { p_num, p_den, r_num, r_den })
}

/// `φ4(K, R) = 2|K ∩ R| / (|K| + |R|)`
pub fn phi4<M: Ord>(k: &[M], r: &[M]) -> f64 {
    let k: BTreeSet<&M> = k.iter().collect();
    let shared = r.iter().filter(|m| k.contains(m)).count();
    2.0 * shared as f64 / (k.len() + r.len()) as f64
}

/// Entity-based CEAF: optimal one-to-one chain alignment under φ4.
pub fn ceaf_e_counts<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<RatioPair> {
    owner_map(gold, "gold")?;
    owner_map(pred, "predicted")?;
    let sim = ceaf_alignment(gold, pred);
    Ok(RatioPair {
        p_num: sim,
        p_den: pred.len() as f64,
        r_num: sim,
        r_den: gold.len() as f64,
    })
}

/// Maximum total φ4 over one-to-one alignments.
pub fn ceaf_alignment<M: Ord>(gold: &[Vec<M>], pred: &[Vec<M>]) -> f64 {
    let w: Vec<Vec<f64>> = gold.iter().map(|k| pred.iter().map(|r| phi4(k, r)).collect()).collect();
    max_weight_assignment(&w).0
}

pub fn muc<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<Prf> {
    Ok(muc_counts(gold, pred)?.prf())
}

pub fn b_cubed<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<Prf> {
    Ok(b_cubed_counts(gold, pred)?.prf())
}

pub fn ceaf_e<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<Prf> {
    Ok(ceaf_e_counts(gold, pred)?.prf())
}

/// Mean of MUC, B³ and CEAF_e (P, R and F1 each averaged).
pub fn chain_score<M: Ord + Clone + Debug>(gold: &[Vec<M>], pred: &[Vec<M>]) -> Result<Prf> {
    Ok(Prf::mean(&[muc(gold, pred)?, b_cubed(gold, pred)?, ceaf_e(gold, pred)?]))
}

/// Mention → chain index; rejects empty chains and mentions in two chains.
pub fn owner_map<M: Ord + Clone + Debug>(chains: &[Vec<M>], side: &'static str) -> Result<BTreeMap<M, usize>> {
    let mut out = BTreeMap::new();
    for (c, chain) in chains.iter().enumerate() {
        if chain.is_empty() {
            return Err(MetricError::NotPartition {
                side,
                detail: format!("chain {c} is empty"),
            });
        }
        for m in chain {
            if let Some(prev) = out.insert(m.clone(), c) {
                return Err(MetricError::NotPartition {
                    side,
                    detail: format!("mention {m:?} is in chains {prev} and {c}"),
                });
            }
        }
    }
    Ok(out)
}
