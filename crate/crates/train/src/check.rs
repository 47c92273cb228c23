//! Finite-difference check of the full model loss.

use mmie_core::{gradcheck_traced, GradReport, ParamTree};
use mmie_data::{generate, Document, GenConfig, ModalityMask};
use mmie_model::{init_params, loss_and_grads_traced, ModelConfig, MODULE_PREFIXES};

use crate::error::{Result, TrainError};

/// A generated document with exactly `tokens` tokens and `frames` frames that
/// exercises every head: at least three entities in two or more chains (one
/// of them non-singleton), a relation, and a grounded and an ungrounded frame.
pub fn fixture(tokens: usize, frames: usize) -> Result<Document> {
    for seed in 0..1000 {
        let cfg = GenConfig {
            docs: 16,
            tokens_per_doc: (tokens, tokens),
            frames_per_doc: (frames, frames),
            entity_rate: 0.6,
            seed,
            ..GenConfig::default()
        };
        if let Some(d) = generate(&cfg)?.documents.into_iter().find(|d| {
            d.entities.len() >= 3
                && d.chains.len() >= 2
                && d.chains.iter().any(|c| c.members.len() >= 2)
                && !d.relations.is_empty()
                && !d.regions.is_empty()
                && d.regions.len() < frames
        }) {
            return Ok(d);
        }
    }
    Err(TrainError::Config(format!("no covering fixture with {tokens} tokens and {frames} frames")))
}

/// Checks the analytic gradient of the total loss, summed over the document
/// in all three modality regimes so that the fusion, construction and
/// encoder paths are all live, at `samples` coordinates spread over every
/// module. Draws whose perturbation flips a ReLU are replaced (see
/// [`gradcheck_traced`]).
pub fn full_model_gradcheck(
    model: &ModelConfig,
    doc: &Document,
    param_seed: u64,
    samples: usize,
    eps: f64,
    sample_seed: u64,
) -> Result<GradReport> {
    let params = init_params(model, param_seed)?;
    let docs: Vec<Document> = ModalityMask::ALL
        .iter()
        .map(|&m| Document { modality_mask: m, ..doc.clone() })
        .collect();
    let loss = |p: &ParamTree| {
        let mut total = 0.0;
        let mut grads = p.zeros_like();
        let mut branches = 0u64;
        for d in &docs {
            let (l, g, b) = loss_and_grads_traced(p, model, d, 0)?;
            total += l.total;
            branches = branches.rotate_left(21) ^ b;
            for (name, e) in grads.iter_mut() {
                e.value.add_assign(g.get(name).expect("aligned"));
            }
        }
        Ok((total, grads, branches))
    };
    Ok(gradcheck_traced(loss, &params, eps, samples, sample_seed, &MODULE_PREFIXES).map_err(mmie_model::ModelError::from)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_requested_shape() {
        let d = fixture(6, 2).unwrap();
        assert_eq!((d.tokens.len(), d.frames.len(), d.regions.len()), (6, 2, 1));
    }

    #[test]
    fn small_check_passes() {
        let r = full_model_gradcheck(&ModelConfig::default(), &fixture(6, 2).unwrap(), 3, 24, 1e-4, 1).unwrap();
        assert_eq!(r.samples.len(), 24);
        assert!(r.max_rel_error < 1e-4, "{}", r.max_rel_error);
    }
}
