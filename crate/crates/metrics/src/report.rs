//! Document-level tallies and the corpus report.
//!
//! Per-document contributions are additive; predictions reference mentions by
//! span, so the same code scores gold-pairs and predicted-pairs outputs.

use std::collections::BTreeMap;

use mmie_data::{Chain, Document, Entity, ModalityMask, Prediction, RelationTriple};
use serde::{Deserialize, Serialize};

use crate::coref::{b_cubed_counts, ceaf_e_counts, muc_counts};
use crate::entity::entity_counts;
use crate::error::{MetricError, Result};
use crate::grounding::grounding_counts;
use crate::prf::{Counts, Prf, RatioPair};
use crate::relation::{relation_counts, ChainRelation};
use crate::taxonomy::{chain_errors, entity_errors, grounding_errors, relation_errors, ErrorReport, ErrorTaxonomy};

pub type Span = (usize, usize);

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub ent: Counts,
    pub muc: RatioPair,
    pub b_cubed: RatioPair,
    pub ceaf_e: RatioPair,
    pub rel: Counts,
    pub gro: Counts,
    pub errors: ErrorTaxonomy,
}

impl std::ops::AddAssign for Tally {
    fn add_assign(&mut self, o: Self) {
        self.ent += o.ent;
        self.muc += o.muc;
        self.b_cubed += o.b_cubed;
        self.ceaf_e += o.ceaf_e;
        self.rel += o.rel;
        self.gro += o.gro;
        self.errors += o.errors;
    }
}

fn span_chains(chains: &[Chain], mentions: &[Entity], side: &'static str) -> Result<Vec<Vec<Span>>> {
    chains
        .iter()
        .map(|c| {
            c.members
                .iter()
                .map(|&m| mentions.get(m).map(Entity::span).ok_or(MetricError::Index { side, index: m }))
                .collect()
        })
        .collect()
}

fn span_relations(
    triples: &[RelationTriple],
    chains: &[Vec<Span>],
    side: &'static str,
) -> Result<Vec<ChainRelation<Span>>> {
    triples
        .iter()
        .map(|t| {
            let get = |c: usize| chains.get(c).cloned().ok_or(MetricError::Index { side, index: c });
            Ok(ChainRelation { sub: get(t.sub)?, obj: get(t.obj)?, rtype: t.rtype.clone() })
        })
        .collect()
}

impl Tally {
    pub fn document(gold: &Document, pred: &Prediction) -> Result<Self> {
        let gold_chains = span_chains(&gold.chains, &gold.entities, "gold")?;
        let pred_chains = span_chains(&pred.chains, &pred.mentions, "predicted")?;
        let gold_rel = span_relations(&gold.relations, &gold_chains, "gold")?;
        let pred_rel = match &pred.relation_chains {
            None => span_relations(&pred.relations, &pred_chains, "predicted")?,
            Some(c) => span_relations(&pred.relations, &span_chains(c, &pred.mentions, "predicted")?, "predicted")?,
        };
        Ok(Self {
            ent: entity_counts(&gold.entities, &pred.entities),
            muc: muc_counts(&gold_chains, &pred_chains)?,
            b_cubed: b_cubed_counts(&gold_chains, &pred_chains)?,
            ceaf_e: ceaf_e_counts(&gold_chains, &pred_chains)?,
            rel: relation_counts(&gold_rel, &pred_rel),
            gro: grounding_counts(&gold.regions, &pred.regions)?,
            errors: ErrorTaxonomy {
                entity: entity_errors(&gold.entities, &pred.entities),
                chain: chain_errors(&gold_chains, &pred_chains),
                relation: relation_errors(&gold_rel, &pred_rel),
                grounding: grounding_errors(&gold.regions, &pred.regions),
            },
        })
    }

    pub fn report(&self) -> EvalReport {
        let cha = ChainPrf::new(self.muc.prf(), self.b_cubed.prf(), self.ceaf_e.prf());
        let ent = Prf::from_counts(self.ent);
        let rel = Prf::from_counts(self.rel);
        let gro = Prf::from_counts(self.gro);
        EvalReport {
            avg: (ent.f1 + cha.f1 + rel.f1 + gro.f1) / 4.0,
            ent,
            cha,
            rel,
            gro,
            errors: self.errors.report(),
            regimes: BTreeMap::new(),
        }
    }
}

/// Chain score (mean of the three metrics) with the components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_e: Prf,
}

impl ChainPrf {
    pub fn new(muc: Prf, b_cubed: Prf, ceaf_e: Prf) -> Self {
        let m = Prf::mean(&[muc, b_cubed, ceaf_e]);
        Self {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            muc,
            b_cubed,
            ceaf_e,
        }
    }

    pub fn prf(&self) -> Prf {
        Prf { precision: self.precision, recall: self.recall, f1: self.f1, tp: None, fp: None, fn_: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ent: Prf,
    pub cha: ChainPrf,
    pub rel: Prf,
    pub gro: Prf,
    /// `(ent.f1 + cha.f1 + rel.f1 + gro.f1) / 4`
    pub avg: f64,
    pub errors: ErrorReport,
    /// Sub-reports keyed by modality regime (`full`, `no_text`, `no_video`),
    /// present only for regimes that occur.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub regimes: BTreeMap<String, EvalReport>,
}

impl EvalReport {
    pub fn f1s(&self) -> [f64; 4] {
        [self.ent.f1, self.cha.f1, self.rel.f1, self.gro.f1]
    }
}

/// Pools per-document tallies (in the order given) into a report with
/// per-regime breakdowns.
pub fn report_from_tallies(tallies: &[(ModalityMask, Tally)]) -> Result<EvalReport> {
    if tallies.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = Tally::default();
    let mut by_regime: BTreeMap<ModalityMask, Tally> = BTreeMap::new();
    for (mask, t) in tallies {
        total += *t;
        *by_regime.entry(*mask).or_default() += *t;
    }
    let mut report = total.report();
    report.regimes = by_regime.into_iter().map(|(m, t)| (m.as_str().to_string(), t.report())).collect();
    Ok(report)
}

pub fn evaluate(pairs: &[(&Document, &Prediction)]) -> Result<EvalReport> {
    let tallies = pairs
        .iter()
        .map(|(d, p)| Ok((d.modality_mask, Tally::document(d, p)?)))
        .collect::<Result<Vec<_>>>()?;
    report_from_tallies(&tallies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmie_data::{generate, oracle, GenConfig};

    #[test]
    fn oracle_predictions_score_one_everywhere() {
        let cfg = GenConfig { docs: 12, ..GenConfig::default() };
        let corpus = generate(&cfg).unwrap();
        let preds: Vec<Prediction> = corpus.documents.iter().map(|d| oracle::predict(d, &cfg)).collect();
        let pairs: Vec<_> = corpus.documents.iter().zip(&preds).collect();
        let r = evaluate(&pairs).unwrap();
        assert_eq!(r.f1s(), [1.0; 4]);
        assert_eq!(r.avg, 1.0);
        for p in [r.cha.muc, r.cha.b_cubed, r.cha.ceaf_e] {
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        }
        assert!(r.errors.values().all(|t| t.categories.values().all(|c| c.count == 0)));
        assert_eq!(r.regimes.keys().collect::<Vec<_>>(), ["full"]);
    }

    #[test]
    fn avg_is_mean_of_four() {
        let cfg = GenConfig { docs: 6, seed: 3, ..GenConfig::default() };
        let corpus = generate(&cfg).unwrap();
        let preds: Vec<Prediction> = corpus
            .documents
            .iter()
            .map(|d| {
                let mut p = oracle::predict(d, &cfg);
                p.entities.pop();
                p.regions.clear();
                p
            })
            .collect();
        let pairs: Vec<_> = corpus.documents.iter().zip(&preds).collect();
        let r = evaluate(&pairs).unwrap();
        let f = r.f1s();
        assert_eq!(r.avg, (f[0] + f[1] + f[2] + f[3]) / 4.0);
        assert!(r.ent.f1 < 1.0 && r.gro.f1 == 0.0);
    }

    #[test]
    fn report_keys_are_stable() {
        let cfg = GenConfig { docs: 2, ..GenConfig::default() };
        let corpus = generate(&cfg).unwrap();
        let preds: Vec<Prediction> = corpus.documents.iter().map(|d| oracle::predict(d, &cfg)).collect();
        let pairs: Vec<_> = corpus.documents.iter().zip(&preds).collect();
        let v = serde_json::to_value(evaluate(&pairs).unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["avg", "cha", "ent", "errors", "gro", "regimes", "rel"]);
        assert!(v["cha"]["muc"]["f1"].is_number() && v["cha"]["ceaf_e"].is_object());
    }

    #[test]
    fn empty_and_bad_indices() {
        assert!(matches!(evaluate(&[]), Err(MetricError::Empty)));
        let cfg = GenConfig { docs: 1, ..GenConfig::default() };
        let corpus = generate(&cfg).unwrap();
        let mut p = oracle::predict(&corpus.documents[0], &cfg);
        p.chains.push(Chain::new(vec![99]));
        assert!(evaluate(&[(&corpus.documents[0], &p)]).is_err());
    }
}
