//! Task heads over the fused features: CRF tagging and pairwise coreference
//! and relation classifiers on text, type + box regression per frame.
//! Pair features are elementwise products of mean-pooled representations.

use mmie_core::nn::{self, Initializer};
use mmie_core::{DenseArray, Graph, Var};
use mmie_data::{tags, Chain};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Dims, LossWeights};
use crate::crf;
use crate::error::{ModelError, Result};

pub const CRF: &str = "heads.crf";
pub const COREF: &str = "heads.coref";
pub const REL: &str = "heads.rel";
pub const GRO: &str = "heads.gro";

/// Grounding classes: `NONE` then the grounding types in order.
pub const GROUNDING_CLASSES: usize = 4;

pub(crate) fn init<R: Rng>(init: &mut Initializer<'_, R>, d: &Dims, relation_classes: usize) -> Result<()> {
    let t = tags::num_tags();
    init.linear(&format!("{CRF}.emit"), d.d_h, t)?;
    init.constant(&format!("{CRF}.trans"), &[t, t], 0.0)?;
    init.constant(&format!("{CRF}.start"), &[t], 0.0)?;
    init.constant(&format!("{CRF}.end"), &[t], 0.0)?;
    init.linear(COREF, d.d_h, 2)?;
    init.linear(REL, d.d_h, relation_classes)?;
    init.linear(&format!("{GRO}.type"), d.d_h, GROUNDING_CLASSES)?;
    init.linear(&format!("{GRO}.box"), d.d_h, 4)?;
    Ok(())
}

/// `[spans, n_x]` matrix whose rows average each span's tokens.
pub fn span_matrix(spans: &[(usize, usize)], n_x: usize) -> Result<DenseArray> {
    let mut m = DenseArray::zeros(&[spans.len(), n_x]);
    for (r, &(s, e)) in spans.iter().enumerate() {
        if s >= e || e > n_x {
            return Err(ModelError::Config(format!("span [{s}, {e}) is empty or exceeds {n_x} tokens")));
        }
        let w = 1.0 / (e - s) as f64;
        m.row_mut(r)[s..e].iter_mut().for_each(|v| *v = w);
    }
    Ok(m)
}

/// `[chains, n_e]` matrix whose rows average each chain's members.
pub fn chain_matrix(chains: &[Chain], n_e: usize) -> Result<DenseArray> {
    let mut m = DenseArray::zeros(&[chains.len(), n_e]);
    for (r, c) in chains.iter().enumerate() {
        if c.members.is_empty() || c.members.iter().any(|&i| i >= n_e) {
            return Err(ModelError::Config(format!("chain {r} is empty or references a missing entity")));
        }
        let w = 1.0 / c.members.len() as f64;
        for &i in &c.members {
            m.row_mut(r)[i] += w;
        }
    }
    Ok(m)
}

/// Mean of the span's token vectors.
pub fn span_repr(h: &DenseArray, span: (usize, usize)) -> Result<Vec<f64>> {
    let m = span_matrix(&[span], h.rows())?;
    Ok(m.matmul(&h.as_matrix())?.into_data())
}

/// Mean of member representations.
pub fn chain_repr(members: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = members.first().ok_or_else(|| ModelError::Config("chain has no members".into()))?;
    let mut out = vec![0.0; first.len()];
    for m in members {
        if m.len() != out.len() {
            return Err(ModelError::Config("member representations differ in width".into()));
        }
        out.iter_mut().zip(m).for_each(|(o, v)| *o += v);
    }
    let n = members.len() as f64;
    Ok(out.into_iter().map(|v| v / n).collect())
}

/// `reps` pooled through a constant averaging matrix.
pub fn pool(g: &mut Graph, weights: DenseArray, h: Var) -> Result<Var> {
    let w = g.constant(weights);
    Ok(g.matmul(w, h)?)
}

/// Logits `[pairs, classes]` of the linear layer at `prefix` over
/// `reps[a] ⊙ reps[b]`.
pub fn pair_logits(g: &mut Graph, prefix: &str, reps: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let (a, b): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    let ra = g.gather_rows(reps, &a)?;
    let rb = g.gather_rows(reps, &b)?;
    let f = g.mul(ra, rb)?;
    Ok(nn::linear(g, prefix, f)?)
}

/// All unordered pairs `(i, j)`, `i < j`.
pub fn unordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// All ordered pairs of distinct indices.
pub fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub struct CrfVars {
    pub emissions: Var,
    pub trans: Var,
    pub start: Var,
    pub end: Var,
}

pub fn crf_vars(g: &mut Graph, h: Var) -> Result<CrfVars> {
    Ok(CrfVars {
        emissions: nn::linear(g, &format!("{CRF}.emit"), h)?,
        trans: g.param(&format!("{CRF}.trans"))?,
        start: g.param(&format!("{CRF}.start"))?,
        end: g.param(&format!("{CRF}.end"))?,
    })
}

/// Sequence NLL divided by the token count.
pub fn crf_loss(g: &mut Graph, v: &CrfVars, gold: &[usize]) -> Result<Var> {
    let l = crf::nll(g, v.emissions, v.trans, v.start, v.end, gold)?;
    Ok(g.scale(l, 1.0 / gold.len() as f64))
}

/// BIO-repaired Viterbi decode.
pub fn crf_decode(g: &Graph, v: &CrfVars) -> Result<Vec<usize>> {
    let p = crf::Potentials {
        emissions: g.value(v.emissions),
        trans: g.value(v.trans),
        start: g.value(v.start).data(),
        end: g.value(v.end).data(),
    };
    let mut path = crf::viterbi(&p)?;
    tags::repair(&mut path);
    Ok(path)
}

/// Per-frame type logits `[n_g, 4]` and sigmoid boxes `[n_g, 4]`.
pub fn grounding_vars(g: &mut Graph, h: Var) -> Result<(Var, Var)> {
    let t = nn::linear(g, &format!("{GRO}.type"), h)?;
    let b = nn::linear(g, &format!("{GRO}.box"), h)?;
    Ok((t, g.sigmoid(b)))
}

/// Mean absolute error over the selected box rows and all four coordinates.
pub fn box_loss(g: &mut Graph, boxes: Var, rows: &[usize], targets: &[[f64; 4]]) -> Result<Option<Var>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let b = g.gather_rows(boxes, rows)?;
    let t = g.constant(DenseArray::new(vec![rows.len(), 4], targets.iter().flatten().copied().collect())?);
    let diff = g.sub(b, t)?;
    let abs = g.abs(diff);
    Ok(Some(g.mean(abs)))
}

/// Component losses of one document; zero where a component has no terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub ent: f64,
    pub cha: f64,
    pub rel: f64,
    pub gro_t: f64,
    pub gro_b: f64,
    pub kl: f64,
    pub total: f64,
}

impl Losses {
    /// `Σ α·component`, plus the weighted KL term.
    pub fn weighted_total(&self, alpha: &LossWeights, kl_weight: f64) -> f64 {
        alpha.ent * self.ent
            + alpha.cha * self.cha
            + alpha.rel * self.rel
            + alpha.gro_t * self.gro_t
            + alpha.gro_b * self.gro_b
            + kl_weight * self.kl
    }
}
