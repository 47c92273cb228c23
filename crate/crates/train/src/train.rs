//! The training loop: one document per optimizer step, shuffled each epoch.

use mmie_core::ParamTree;
use mmie_data::Corpus;
use mmie_model::{init_params, loss_and_grads, Losses, ModelConfig, ModelError};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::checkpoint::{Checkpoint, RngStates};
use crate::config::RunConfig;
use crate::error::{Result, TrainError};
use crate::rng::{substream, Purpose, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub doc: String,
    pub losses: Losses,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepLog>,
}

impl Trained {
    pub fn params(&self) -> &ParamTree {
        &self.checkpoint.params
    }

    pub fn model(&self) -> &ModelConfig {
        &self.checkpoint.model
    }
}

/// Parameters a run starts from.
pub fn initial_params(run: &RunConfig, model: &ModelConfig) -> Result<ParamTree> {
    Ok(init_params(model, substream(run.seed, Purpose::Init).next_u64())?)
}

/// The model configuration for training on `corpus`; fails if a pinned
/// relation inventory misses a label the corpus uses.
pub fn model_for(run: &RunConfig, corpus: &Corpus) -> Result<ModelConfig> {
    let model = run.model_config(corpus.labels.relations.clone());
    model.validate()?;
    if let Some(missing) = corpus.labels.relations.iter().find(|r| !model.relations.contains(r)) {
        return Err(TrainError::Config(format!("relation label `{missing}` is not in the model's inventory")));
    }
    Ok(model)
}

/// Trains on `corpus` in its given order of documents, calling `on_step`
/// after every update. Any non-finite loss or gradient aborts the run.
pub fn train(run: &RunConfig, corpus: &Corpus, mut on_step: impl FnMut(&StepLog)) -> Result<Trained> {
    run.validate()?;
    if corpus.is_empty() {
        return Err(mmie_data::DataError::EmptyCorpus.into());
    }
    let model = model_for(run, corpus)?;
    let mut params = initial_params(run, &model)?;
    let mut adam = Adam::new(run.optim.clone(), &params);
    let mut shuffle = substream(run.seed, Purpose::Shuffle);
    let mut noise = substream(run.seed, Purpose::Noise);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = Vec::new();
    let mut epoch = 0;
    let max_steps = run.train.max_steps.unwrap_or(u64::MAX);
    'epochs: while epoch < run.train.epochs {
        order.shuffle(&mut shuffle);
        for &i in &order {
            if adam.step >= max_steps {
                break 'epochs;
            }
            let doc = &corpus.documents[i];
            let step = adam.step + 1;
            let non_finite = || TrainError::NonFiniteLoss { step, doc: doc.id.clone() };
            let (losses, grads) = match loss_and_grads(&params, &model, doc, noise.next_u64()) {
                Ok(r) => r,
                Err(ModelError::Numeric(e)) if matches!(e, mmie_core::NumericError::NonFinite { .. }) => {
                    return Err(non_finite())
                }
                Err(e) => return Err(e.into()),
            };
            if !losses.total.is_finite() {
                return Err(non_finite());
            }
            adam.step(&mut params, &grads, &doc.id)?;
            let entry = StepLog { step, epoch, doc: doc.id.clone(), losses };
            on_step(&entry);
            log.push(entry);
        }
        epoch += 1;
    }
    Ok(Trained {
        checkpoint: Checkpoint {
            run: run.clone(),
            model,
            step: adam.step,
            epoch,
            rng: RngStates {
                shuffle: RngState::capture(&shuffle),
                noise: RngState::capture(&noise),
            },
            params,
            optimizer: adam,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmie_data::{generate, GenConfig};

    fn small() -> (RunConfig, Corpus) {
        let mut run = RunConfig::default();
        run.train.epochs = 1;
        run.gen = GenConfig { docs: 3, tokens_per_doc: (6, 8), frames_per_doc: (1, 2), ..GenConfig::default() };
        let corpus = generate(&run.gen).unwrap();
        (run, corpus)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (mut run, corpus) = small();
        run.train.epochs = 0;
        let t = train(&run, &corpus, |_| {}).unwrap();
        assert!(t.log.is_empty());
        assert_eq!(t.params(), &initial_params(&run, t.model()).unwrap());
    }

    #[test]
    fn steps_visit_every_document_once_per_epoch() {
        let (mut run, corpus) = small();
        run.train.epochs = 2;
        let mut seen = Vec::new();
        let t = train(&run, &corpus, |s| seen.push(s.doc.clone())).unwrap();
        assert_eq!(t.checkpoint.step, 6);
        let mut ids: Vec<String> = corpus.documents.iter().map(|d| d.id.clone()).collect();
        ids.sort();
        for half in seen.chunks(3) {
            let mut h = half.to_vec();
            h.sort();
            assert_eq!(h, ids);
        }
        assert!(t.log.iter().all(|s| s.losses.total.is_finite()));
    }

    #[test]
    fn max_steps_stops_early() {
        let (mut run, corpus) = small();
        run.train.epochs = 5;
        run.train.max_steps = Some(4);
        assert_eq!(train(&run, &corpus, |_| {}).unwrap().checkpoint.step, 4);
    }

    #[test]
    fn pinned_labels_must_cover_corpus() {
        let (mut run, corpus) = small();
        run.labels.relations = Some(vec!["other".into()]);
        assert!(matches!(train(&run, &corpus, |_| {}), Err(TrainError::Config(_))));
    }

    #[test]
    fn divergence_is_reported_with_step_and_document() {
        let (mut run, corpus) = small();
        run.optim.lr_other = 1e300;
        run.optim.lr_encoder = 1e300;
        run.train.epochs = 3;
        let err = train(&run, &corpus, |_| {}).unwrap_err();
        assert!(err.is_numeric(), "{err}");
        assert!(matches!(err, TrainError::NonFiniteLoss { step, .. } | TrainError::NonFiniteGradient { step, .. } if step > 1));
    }
}
