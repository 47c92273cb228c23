use std::collections::HashMap;

use mmie_data::Entity;

use crate::prf::{Counts, Prf};

/// Exact span-and-type matches, one-to-one (multiset intersection).
pub fn entity_counts(gold: &[Entity], pred: &[Entity]) -> Counts {
    let mut pool: HashMap<Entity, usize> = HashMap::new();
    for e in gold {
        *pool.entry(*e).or_default() += 1;
    }
    let mut tp = 0;
    for e in pred {
        if let Some(n) = pool.get_mut(e).filter(|n| **n > 0) {
            *n -= 1;
            tp += 1;
        }
    }
    Counts::matched(tp, pred.len(), gold.len())
}

pub fn entity_f1(gold: &[Entity], pred: &[Entity]) -> Prf {
    Prf::from_counts(entity_counts(gold, pred))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmie_data::EntityType::*;

    fn e(start: usize, end: usize, etype: mmie_data::EntityType) -> Entity {
        Entity { start, end, etype }
    }

    #[test]
    fn perfect_and_partial() {
        let gold = [e(0, 1, Per), e(3, 5, Loc)];
        assert_eq!(entity_f1(&gold, &gold).f1, 1.0);
        let p = entity_f1(&gold, &gold[..1]);
        assert_eq!((p.precision, p.recall), (1.0, 0.5));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn off_by_one_is_fp_and_fn() {
        let c = entity_counts(&[e(3, 5, Loc)], &[e(3, 4, Loc)]);
        assert_eq!(c, Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn duplicates_match_once() {
        let c = entity_counts(&[e(0, 1, Per)], &[e(0, 1, Per), e(0, 1, Per)]);
        assert_eq!(c, Counts { tp: 1, fp: 1, fn_: 0 });
    }
}
