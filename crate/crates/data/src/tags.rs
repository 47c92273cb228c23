//! BIO tag inventory. Index 0 is `O`; type `t` owns `B-t = 1 + 2t` and
//! `I-t = 2 + 2t`, in [`EntityType::ALL`] order.

use crate::schema::{Entity, EntityType};

pub const OUTSIDE: usize = 0;

pub fn num_tags() -> usize {
    2 * EntityType::ALL.len() + 1
}

pub fn begin(t: EntityType) -> usize {
    1 + 2 * t.index()
}

pub fn inside(t: EntityType) -> usize {
    2 + 2 * t.index()
}

/// `(type, is_begin)` for a non-`O` tag.
pub fn split_tag(tag: usize) -> Option<(EntityType, bool)> {
    if tag == OUTSIDE || tag >= num_tags() {
        return None;
    }
    Some((EntityType::ALL[(tag - 1) / 2], tag % 2 == 1))
}

pub fn tag_name(tag: usize) -> String {
    match split_tag(tag) {
        None => "O".into(),
        Some((t, true)) => format!("B-{t}"),
        Some((t, false)) => format!("I-{t}"),
    }
}

pub fn encode(entities: &[Entity], n_tokens: usize) -> Vec<usize> {
    let mut tags = vec![OUTSIDE; n_tokens];
    for e in entities {
        for (k, slot) in tags[e.start..e.end.min(n_tokens)].iter_mut().enumerate() {
            *slot = if k == 0 { begin(e.etype) } else { inside(e.etype) };
        }
    }
    tags
}

/// Rewrites every `I-t` not preceded by `B-t`/`I-t` as `B-t`.
pub fn repair(tags: &mut [usize]) {
    let mut prev: Option<EntityType> = None;
    for tag in tags.iter_mut() {
        prev = match split_tag(*tag) {
            None => None,
            Some((t, is_begin)) => {
                if !is_begin && prev != Some(t) {
                    *tag = begin(t);
                }
                Some(t)
            }
        };
    }
}

/// Spans of a tag sequence; applies [`repair`] semantics to stray `I-t`.
pub fn decode(tags: &[usize]) -> Vec<Entity> {
    let mut tags = tags.to_vec();
    repair(&mut tags);
    let mut out: Vec<Entity> = Vec::new();
    for (i, &tag) in tags.iter().enumerate() {
        match split_tag(tag) {
            Some((etype, true)) => out.push(Entity { start: i, end: i + 1, etype }),
            Some((_, false)) => out.last_mut().expect("repaired").end = i + 1,
            None => {}
        }
    }
    out
}
