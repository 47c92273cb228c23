use crate::prf::{Counts, Prf};

/// A relation between two chains given by their member mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainRelation<M> {
    pub sub: Vec<M>,
    pub obj: Vec<M>,
    pub rtype: String,
}

fn intersects<M: PartialEq>(a: &[M], b: &[M]) -> bool {
    a.iter().any(|x| b.contains(x))
}

impl<M: PartialEq> ChainRelation<M> {
    /// Both argument chains overlap; the type is not compared.
    pub fn overlaps(&self, other: &Self) -> bool {
        intersects(&self.sub, &other.sub) && intersects(&self.obj, &other.obj)
    }

    pub fn matches(&self, other: &Self) -> bool {
        self.rtype == other.rtype && self.overlaps(other)
    }
}

/// For each prediction in order, the first still-unmatched gold triple it
/// matches.
pub fn match_relations<M: PartialEq>(gold: &[ChainRelation<M>], pred: &[ChainRelation<M>]) -> Vec<Option<usize>> {
    let mut taken = vec![false; gold.len()];
    pred.iter()
        .map(|p| {
            let g = (0..gold.len()).find(|&g| !taken[g] && p.matches(&gold[g]))?;
            taken[g] = true;
            Some(g)
        })
        .collect()
}

pub fn relation_counts<M: PartialEq>(gold: &[ChainRelation<M>], pred: &[ChainRelation<M>]) -> Counts {
    let tp = match_relations(gold, pred).iter().flatten().count();
    Counts::matched(tp, pred.len(), gold.len())
}

pub fn relation_f1<M: PartialEq>(gold: &[ChainRelation<M>], pred: &[ChainRelation<M>]) -> Prf {
    Prf::from_counts(relation_counts(gold, pred))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(sub: &[u8], obj: &[u8], t: &str) -> ChainRelation<u8> {
        ChainRelation { sub: sub.to_vec(), obj: obj.to_vec(), rtype: t.into() }
    }

    #[test]
    fn partial_chain_overlap_is_a_match() {
        let c = relation_counts(&[rel(&[1, 2], &[3], "T")], &[rel(&[1], &[3], "T")]);
        assert_eq!(c, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn wrong_type_is_fp_and_fn() {
        let c = relation_counts(&[rel(&[1, 2], &[3], "T")], &[rel(&[1, 2], &[3], "U")]);
        assert_eq!(c, Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn each_gold_is_matched_once() {
        let gold = [rel(&[1], &[3], "T")];
        let c = relation_counts(&gold, &[rel(&[1], &[3], "T"), rel(&[1], &[3], "T")]);
        assert_eq!(c, Counts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn direction_matters() {
        let c = relation_counts(&[rel(&[1], &[3], "T")], &[rel(&[3], &[1], "T")]);
        assert_eq!(c.tp, 0);
    }
}
