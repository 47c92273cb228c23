//! Corpus evaluation. Documents are scored in parallel; tallies are pooled in
//! corpus order, so the report does not depend on the thread count.

use mmie_core::ParamTree;
use mmie_data::{Corpus, DataError, ModalityMask, Prediction};
use mmie_metrics::{report_from_tallies, EvalReport, Tally};
use mmie_model::{predict, ModelConfig, PairMode};
use rayon::prelude::*;

use crate::error::{Result, TrainError};

/// Fails unless the model can express every relation label of `corpus`.
pub fn check_labels(model: &ModelConfig, corpus: &Corpus) -> Result<()> {
    match corpus.labels.relations.iter().find(|r| !model.relations.contains(r)) {
        Some(r) => Err(TrainError::Config(format!(
            "evaluation corpus uses relation label `{r}` unknown to the model"
        ))),
        None => Ok(()),
    }
}

pub fn predict_corpus(params: &ParamTree, model: &ModelConfig, corpus: &Corpus, mode: PairMode) -> Result<Vec<Prediction>> {
    check_labels(model, corpus)?;
    corpus
        .documents
        .par_iter()
        .map(|d| Ok(predict(params, model, d, mode)?))
        .collect()
}

pub fn evaluate(params: &ParamTree, model: &ModelConfig, corpus: &Corpus, mode: PairMode) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(DataError::EmptyCorpus.into());
    }
    check_labels(model, corpus)?;
    let tallies: Vec<(ModalityMask, Tally)> = corpus
        .documents
        .par_iter()
        .map(|d| {
            let p = predict(params, model, d, mode)?;
            Ok((d.modality_mask, Tally::document(d, &p)?))
        })
        .collect::<Result<_>>()?;
    Ok(report_from_tallies(&tallies)?)
}

/// [`evaluate`] on a dedicated pool of `threads` workers.
pub fn evaluate_with_threads(
    threads: usize,
    params: &ParamTree,
    model: &ModelConfig,
    corpus: &Corpus,
    mode: PairMode,
) -> Result<EvalReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| evaluate(params, model, corpus, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use mmie_data::{generate, GenConfig, Provenance};
    use mmie_model::init_params;

    fn setup() -> (ParamTree, ModelConfig, Corpus) {
        let corpus = generate(&GenConfig { docs: 5, ..GenConfig::default() }).unwrap();
        let model = RunConfig::default().model_config(corpus.labels.relations.clone());
        (init_params(&model, 1).unwrap(), model, corpus)
    }

    #[test]
    fn thread_count_does_not_change_the_report() {
        let (p, m, c) = setup();
        let one = evaluate_with_threads(1, &p, &m, &c, PairMode::PredictedPairs).unwrap();
        let four = evaluate_with_threads(4, &p, &m, &c, PairMode::PredictedPairs).unwrap();
        assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&four).unwrap());
    }

    #[test]
    fn empty_corpus_and_unknown_labels_fail() {
        let (p, m, c) = setup();
        let empty = Corpus::from_documents(vec![], &[], Provenance::InMemory);
        assert!(matches!(evaluate(&p, &m, &empty, PairMode::GoldPairs), Err(TrainError::Data(DataError::EmptyCorpus))));
        let narrow = ModelConfig { relations: vec!["other".into()], ..m };
        let p2 = init_params(&narrow, 1).unwrap();
        assert!(matches!(evaluate(&p2, &narrow, &c, PairMode::GoldPairs), Err(TrainError::Config(_))));
    }
}
