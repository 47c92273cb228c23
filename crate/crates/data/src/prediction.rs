use serde::{Deserialize, Serialize};

use crate::schema::{Chain, Entity, Region, RelationTriple};

/// Per-document model (or oracle) output.
///
/// `mentions` is the entity set the coreference and relation decisions were
/// made over: the gold entities in gold-pairs evaluation, the predicted
/// entities otherwise. `coref_pairs` and `chains` index into `mentions`;
/// `relations` index into `relation_chains` when it is set (gold-pairs
/// relation scoring runs over the gold chains), else into `chains`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tags: Vec<String>,
    pub entities: Vec<Entity>,
    pub mentions: Vec<Entity>,
    pub coref_pairs: Vec<(usize, usize)>,
    pub chains: Vec<Chain>,
    pub relations: Vec<RelationTriple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_chains: Option<Vec<Chain>>,
    pub regions: Vec<Region>,
}

impl Prediction {
    /// The chains `relations` refer to.
    pub fn relation_chain_set(&self) -> &[Chain] {
        self.relation_chains.as_deref().unwrap_or(&self.chains)
    }
}

/// Union-find closure of positive pairs over `n` mentions. Chains are listed
/// by their smallest member, members ascending; untouched mentions are
/// singletons.
pub fn decode_chains(pairs: &[(usize, usize)], n: usize) -> Vec<Chain> {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut chains: Vec<Chain> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for m in 0..n {
        let r = find(&mut parent, m);
        if slot[r] == usize::MAX {
            slot[r] = chains.len();
            chains.push(Chain::new(Vec::new()));
        }
        chains[slot[r]].members.push(m);
    }
    chains
}

/// All within-chain unordered pairs `(a, b)` with `a < b`.
pub fn chain_pairs(chains: &[Chain]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c in chains {
        for (i, &a) in c.members.iter().enumerate() {
            for &b in &c.members[i + 1..] {
                out.push((a.min(b), a.max(b)));
            }
        }
    }
    out.sort_unstable();
    out
}
