//! Token identities: the `w<id>` surface convention, hash bucketing for
//! anything else, and the type-block layout synthetic corpora use.

use crate::schema::EntityType;

pub fn token_string(id: usize) -> String {
    format!("w{id}")
}

/// Maps a token to `0..vocab`: `w<id>` with `id < vocab` maps to `id`, any
/// other token is FNV-1a hashed into a bucket.
pub fn token_id(token: &str, vocab: usize) -> usize {
    if let Some(digits) = token.strip_prefix('w') {
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(id) = digits.parse::<usize>() {
                if id < vocab {
                    return id;
                }
            }
        }
    }
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % vocab as u64) as usize
}

/// Vocabulary split into one block per entity type (together half the
/// vocabulary) followed by filler tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabLayout {
    pub vocab: usize,
}

impl VocabLayout {
    pub fn new(vocab: usize) -> Self {
        Self { vocab }
    }

    pub fn block_size(&self) -> usize {
        self.vocab / (2 * EntityType::ALL.len())
    }

    pub fn type_range(&self, t: EntityType) -> std::ops::Range<usize> {
        let s = self.block_size();
        t.index() * s..(t.index() + 1) * s
    }

    pub fn filler_range(&self) -> std::ops::Range<usize> {
        self.block_size() * EntityType::ALL.len()..self.vocab
    }

    pub fn type_of(&self, id: usize) -> Option<EntityType> {
        EntityType::ALL.into_iter().find(|&t| self.type_range(t).contains(&id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip_and_hash_is_stable() {
        assert_eq!(token_id(&token_string(17), 256), 17);
        assert_eq!(token_id("w300", 256), token_id("w300", 256));
        assert!(token_id("hello", 256) < 256);
        assert_eq!(token_id("hello", 256), token_id("hello", 256));
    }

    #[test]
    fn layout_blocks_are_disjoint() {
        let l = VocabLayout::new(256);
        assert_eq!(l.block_size(), 32);
        assert_eq!(l.type_of(0), Some(EntityType::Per));
        assert_eq!(l.type_of(127), Some(EntityType::Time));
        assert_eq!(l.type_of(128), None);
        assert_eq!(l.filler_range(), 128..256);
    }
}
