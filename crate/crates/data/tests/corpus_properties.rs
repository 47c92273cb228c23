use std::collections::BTreeSet;

use mmie_data::{
    assign_modality_regime, generate, parse_corpus, parse_corpus_str, split_corpus, to_jsonl, validate, write_corpus,
    GenConfig, ModalityMask, Provenance,
};
use proptest::prelude::*;

fn config(seed: u64, docs: usize) -> GenConfig {
    GenConfig { docs, seed, ..GenConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jsonl_round_trip_is_identity(seed in 0u64..1000, docs in 1usize..6) {
        let corpus = generate(&config(seed, docs)).unwrap();
        let text = to_jsonl(&corpus.documents);
        let back = parse_corpus_str(&text, Provenance::InMemory).unwrap();
        prop_assert_eq!(&back.documents, &corpus.documents);
        prop_assert_eq!(to_jsonl(&back.documents), text);
    }

    #[test]
    fn generated_documents_are_valid(seed in 0u64..1000, merge in 0.0f64..1.0, rate in 0.0f64..1.0) {
        let cfg = GenConfig { docs: 4, seed, chain_merge_prob: merge, entity_rate: rate, ..GenConfig::default() };
        for d in &generate(&cfg).unwrap().documents {
            prop_assert!(validate(d).is_empty());
            let mut frames: Vec<usize> = d.regions.iter().map(|r| r.frame).collect();
            frames.dedup();
            prop_assert_eq!(frames.len(), d.regions.len());
        }
    }

    #[test]
    fn split_partitions_the_corpus(seed in 0u64..1000, docs in 1usize..40) {
        let corpus = generate(&config(seed, docs)).unwrap();
        let s = split_corpus(&corpus, (0.8, 0.1, 0.1), seed).unwrap();
        let ids = |c: &mmie_data::Corpus| c.documents.iter().map(|d| d.id.clone()).collect::<Vec<_>>();
        let (tr, dv, te) = (ids(&s.train), ids(&s.dev), ids(&s.test));
        let all: BTreeSet<String> = tr.iter().chain(&dv).chain(&te).cloned().collect();
        prop_assert_eq!(all.len(), tr.len() + dv.len() + te.len());
        prop_assert_eq!(all, ids(&corpus).into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn regimes_keep_gold_annotations(seed in 0u64..1000) {
        let corpus = generate(&config(seed, 9)).unwrap();
        let masked = assign_modality_regime(&corpus, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), seed).unwrap();
        let mut count = [0usize; 3];
        for (a, b) in corpus.documents.iter().zip(&masked.documents) {
            prop_assert_eq!(&a.entities, &b.entities);
            prop_assert_eq!(&a.regions, &b.regions);
            count[ModalityMask::ALL.iter().position(|m| *m == b.modality_mask).unwrap()] += 1;
        }
        prop_assert_eq!(count, [3, 3, 3]);
    }
}

#[test]
fn file_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let corpus = generate(&config(7, 8)).unwrap();
    write_corpus(&path, &corpus).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = parse_corpus(&path).unwrap();
    assert_eq!(back.documents, corpus.documents);
    assert_eq!(back.labels.entities, corpus.labels.entities);
    write_corpus(&path, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}
