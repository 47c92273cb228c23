//! Deterministic train/dev/test splitting and modality-regime assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};
use crate::schema::{Corpus, ModalityMask};

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

// absorbs representation error such as 0.1 * 30 = 3.0000000000000004 vs 2.9999...
const COUNT_SLACK: f64 = 1e-9;

/// Seeded shuffle then contiguous split. Dev and test get `floor(n * r)`
/// documents; the remainder goes to train.
pub fn split_corpus(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (r_train, r_dev, r_test) = ratios;
    if [r_train, r_dev, r_test].iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(DataError::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    if (r_train + r_dev + r_test - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!("split ratios must sum to 1, got {ratios:?}")));
    }
    if corpus.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = (n as f64 * r_dev + COUNT_SLACK).floor() as usize;
    let n_test = (n as f64 * r_test + COUNT_SLACK).floor() as usize;
    let n_train = n - n_dev - n_test;

    let take = |idx: &[usize], note: &str| {
        corpus.derive(idx.iter().map(|&i| corpus.documents[i].clone()).collect(), format!("{note} split, seed {seed}"))
    };
    Ok(Splits {
        train: take(&order[..n_train], "train"),
        dev: take(&order[n_train..n_train + n_dev], "dev"),
        test: take(&order[n_train + n_dev..], "test"),
    })
}

/// Per-regime document counts for `n` documents: floors, then the leftover
/// documents go to the largest fractional remainders (earlier regime first
/// on ties).
pub fn regime_counts(n: usize, fractions: (f64, f64, f64)) -> Result<[usize; 3]> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "regime fractions must be nonnegative and sum to 1, got {fractions:?}"
        )));
    }
    let exact: Vec<f64> = f.iter().map(|v| v * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    for i in 0..3 {
        counts[i] = (exact[i] + COUNT_SLACK).floor() as usize;
    }
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if f[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    Ok(counts)
}

/// Overwrites every document's modality mask: a seeded permutation, then the
/// first block full, the next no-text, the rest no-video.
pub fn assign_modality_regime(corpus: &Corpus, fractions: (f64, f64, f64), seed: u64) -> Result<Corpus> {
    let counts = regime_counts(corpus.len(), fractions)?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut docs = corpus.documents.clone();
    for (rank, &i) in order.iter().enumerate() {
        docs[i].modality_mask = if rank < counts[0] {
            ModalityMask::Full
        } else if rank < counts[0] + counts[1] {
            ModalityMask::NoText
        } else {
            ModalityMask::NoVideo
        };
    }
    Ok(corpus.derive(docs, format!("regime {fractions:?}, seed {seed}")))
}
