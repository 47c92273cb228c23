//! Classification of wrong predictions into two error kinds per task.
//! Rates are `errors of a kind / total predictions` for the task.

use std::collections::BTreeMap;

use mmie_data::{Entity, Region};
use serde::{Deserialize, Serialize};

use crate::grounding::{iou, match_regions, IOU_THRESHOLD};
use crate::relation::{match_relations, ChainRelation};

/// Two error counts out of `predictions`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub predictions: u64,
    pub first: u64,
    pub second: u64,
}

impl std::ops::AddAssign for ErrorPair {
    fn add_assign(&mut self, o: Self) {
        self.predictions += o.predictions;
        self.first += o.first;
        self.second += o.second;
    }
}

/// Raw counts; see [`ErrorTaxonomy::report`] for the named categories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTaxonomy {
    /// boundary incorrect / boundary correct but type incorrect
    pub entity: ErrorPair,
    /// chain contains incorrect entities / chain correct but entities missing
    pub chain: ErrorPair,
    /// false relation between chains / incorrect relation type
    pub relation: ErrorPair,
    /// boundary incorrect / boundary correct but type incorrect
    pub grounding: ErrorPair,
}

impl std::ops::AddAssign for ErrorTaxonomy {
    fn add_assign(&mut self, o: Self) {
        self.entity += o.entity;
        self.chain += o.chain;
        self.relation += o.relation;
        self.grounding += o.grounding;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCategory {
    pub count: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskErrors {
    pub predictions: u64,
    pub categories: BTreeMap<String, ErrorCategory>,
}

pub type ErrorReport = BTreeMap<String, TaskErrors>;

impl ErrorTaxonomy {
    pub fn total_errors(&self) -> u64 {
        [self.entity, self.chain, self.relation, self.grounding]
            .iter()
            .map(|e| e.first + e.second)
            .sum()
    }

    pub fn report(&self) -> ErrorReport {
        let task = |e: ErrorPair, first: &str, second: &str| {
            let cat = |count: u64| ErrorCategory {
                count,
                rate: if e.predictions == 0 { 0.0 } else { count as f64 / e.predictions as f64 },
            };
            TaskErrors {
                predictions: e.predictions,
                categories: [(first.to_string(), cat(e.first)), (second.to_string(), cat(e.second))].into(),
            }
        };
        [
            ("ent".to_string(), task(self.entity, "boundary_incorrect", "type_incorrect")),
            ("cha".to_string(), task(self.chain, "incorrect_entities", "missing_entities")),
            ("rel".to_string(), task(self.relation, "false_relation", "incorrect_type")),
            ("gro".to_string(), task(self.grounding, "boundary_incorrect", "type_incorrect")),
        ]
        .into()
    }
}

/// Unmatched predicted entity: type error if some gold entity has its exact
/// span, boundary error otherwise.
pub fn entity_errors(gold: &[Entity], pred: &[Entity]) -> ErrorPair {
    let mut remaining: Vec<Entity> = gold.to_vec();
    let mut out = ErrorPair { predictions: pred.len() as u64, ..ErrorPair::default() };
    let mut wrong = Vec::new();
    for p in pred {
        match remaining.iter().position(|g| g == p) {
            Some(i) => {
                remaining.swap_remove(i);
            }
            None => wrong.push(p),
        }
    }
    for p in wrong {
        if gold.iter().any(|g| g.span() == p.span()) {
            out.second += 1;
        } else {
            out.first += 1;
        }
    }
    out
}

/// A predicted chain equal to no gold chain is "missing entities" when all
/// its mentions sit in one gold chain, and "incorrect entities" otherwise.
pub fn chain_errors<M: Ord + Clone>(gold: &[Vec<M>], pred: &[Vec<M>]) -> ErrorPair {
    let sorted = |c: &Vec<M>| {
        let mut c = c.clone();
        c.sort();
        c
    };
    let gold_sorted: Vec<Vec<M>> = gold.iter().map(sorted).collect();
    let mut out = ErrorPair { predictions: pred.len() as u64, ..ErrorPair::default() };
    for p in pred {
        let ps = sorted(p);
        if gold_sorted.contains(&ps) {
            continue;
        }
        let within_one = gold_sorted.iter().any(|g| ps.iter().all(|m| g.binary_search(m).is_ok()));
        if within_one {
            out.second += 1;
        } else {
            out.first += 1;
        }
    }
    out
}

/// Unmatched predicted triple: type error if some gold triple links
/// overlapping chains, false relation otherwise.
pub fn relation_errors<M: PartialEq>(gold: &[ChainRelation<M>], pred: &[ChainRelation<M>]) -> ErrorPair {
    let matched = match_relations(gold, pred);
    let mut out = ErrorPair { predictions: pred.len() as u64, ..ErrorPair::default() };
    for (p, m) in pred.iter().zip(&matched) {
        if m.is_some() {
            continue;
        }
        if gold.iter().any(|g| g.overlaps(p) && g.rtype != p.rtype) {
            out.second += 1;
        } else {
            out.first += 1;
        }
    }
    out
}

/// Unmatched predicted region: type error if a gold region on the same
/// frame clears the IoU threshold, boundary error otherwise.
pub fn grounding_errors(gold: &[Region], pred: &[Region]) -> ErrorPair {
    let matched = match_regions(gold, pred);
    let mut out = ErrorPair { predictions: pred.len() as u64, ..ErrorPair::default() };
    for (i, p) in pred.iter().enumerate() {
        if matched.iter().any(|&(m, _)| m == i) {
            continue;
        }
        let box_ok = gold
            .iter()
            .any(|g| g.frame == p.frame && g.vtype != p.vtype && iou(&g.bbox(), &p.bbox()) > IOU_THRESHOLD);
        if box_ok {
            out.second += 1;
        } else {
            out.first += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmie_data::{EntityType, GroundingType};

    #[test]
    fn type_flip_is_a_type_error() {
        let gold = [Entity { start: 0, end: 2, etype: EntityType::Per }];
        let mut pred = gold;
        pred[0].etype = EntityType::Org;
        assert_eq!(entity_errors(&gold, &pred), ErrorPair { predictions: 1, first: 0, second: 1 });
        pred[0].end = 1;
        assert_eq!(entity_errors(&gold, &pred), ErrorPair { predictions: 1, first: 1, second: 0 });
        assert_eq!(entity_errors(&gold, &gold), ErrorPair { predictions: 1, first: 0, second: 0 });
    }

    #[test]
    fn chain_error_kinds() {
        let gold = vec![vec![1, 2, 3], vec![4]];
        let e = chain_errors(&gold, &[vec![2, 1], vec![3], vec![4]]);
        assert_eq!(e, ErrorPair { predictions: 3, first: 0, second: 2 });
        let e = chain_errors(&gold, &[vec![1, 2, 3, 4]]);
        assert_eq!(e, ErrorPair { predictions: 1, first: 1, second: 0 });
    }

    #[test]
    fn relation_error_kinds() {
        let r = |s: u8, o: u8, t: &str| ChainRelation { sub: vec![s], obj: vec![o], rtype: t.into() };
        let gold = [r(1, 2, "A")];
        let e = relation_errors(&gold, &[r(1, 2, "B"), r(2, 1, "A"), r(1, 2, "A")]);
        assert_eq!(e, ErrorPair { predictions: 3, first: 1, second: 1 });
    }

    #[test]
    fn grounding_error_kinds() {
        let g = Region { frame: 0, vtype: GroundingType::Per, cx: 0.5, cy: 0.5, w: 0.5, h: 0.5 };
        let mut wrong_type = g;
        wrong_type.vtype = GroundingType::Loc;
        let mut wrong_box = g;
        wrong_box.w = 0.1;
        let e = grounding_errors(&[g], &[wrong_type, wrong_box]);
        assert_eq!(e, ErrorPair { predictions: 2, first: 1, second: 1 });
    }

    #[test]
    fn report_names_and_rates() {
        let t = ErrorTaxonomy {
            entity: ErrorPair { predictions: 4, first: 1, second: 2 },
            ..ErrorTaxonomy::default()
        };
        let r = t.report();
        assert_eq!(r["ent"].categories["type_incorrect"].rate, 0.5);
        assert_eq!(r["gro"].categories["boundary_incorrect"].rate, 0.0);
        assert_eq!(t.total_errors(), 3);
    }
}
