//! End-to-end runs: corpus preparation, training, held-out evaluation and
//! output files.

use std::io::{BufWriter, Write};
use std::path::Path;

use mmie_data::{assign_modality_regime, generate, parse_corpus, Corpus, GenConfig};
use mmie_metrics::EvalReport;
use mmie_model::PairMode;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, TrainError};
use crate::eval::evaluate;
use crate::rng::{substream, Purpose};
use crate::train::{train, StepLog, Trained};

/// Generator seed offset for the held-out evaluation corpus.
pub const EVAL_SEED_OFFSET: u64 = 1_000_003;

/// Summary written to `paths.report`. Free of timings, so identical runs
/// produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub steps: u64,
    pub train_docs: usize,
    pub eval_docs: usize,
    pub mode: PairMode,
    pub first_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub eval: EvalReport,
}

pub struct RunOutcome {
    pub trained: Trained,
    pub train_corpus: Corpus,
    pub eval_corpus: Corpus,
    pub report: RunReport,
}

fn regime_seeds(run: &RunConfig) -> (u64, u64) {
    let mut rng = substream(run.seed, Purpose::Regimes);
    (rng.next_u64(), rng.next_u64())
}

fn with_regimes(run: &RunConfig, corpus: Corpus, seed: u64) -> Result<Corpus> {
    match run.data.regime_fractions {
        Some(f) => Ok(assign_modality_regime(&corpus, f, seed)?),
        None => Ok(corpus),
    }
}

/// The training corpus: `paths.corpus` or a corpus generated from `[gen]`,
/// with modality regimes reassigned if `data.regime_fractions` is set.
pub fn training_corpus(run: &RunConfig) -> Result<Corpus> {
    let corpus = match &run.paths.corpus {
        Some(p) => parse_corpus(p)?,
        None => generate(&run.gen)?,
    };
    with_regimes(run, corpus, regime_seeds(run).0)
}

/// The evaluation corpus: `paths.eval_corpus`, or `data.eval_docs` freshly
/// generated documents from a generator seed disjoint from training.
pub fn evaluation_corpus(run: &RunConfig) -> Result<Corpus> {
    let corpus = match &run.paths.eval_corpus {
        Some(p) => parse_corpus(p)?,
        None => generate(&GenConfig {
            docs: run.data.eval_docs,
            seed: run.gen.seed.wrapping_add(EVAL_SEED_OFFSET),
            ..run.gen.clone()
        })?,
    };
    with_regimes(run, corpus, regime_seeds(run).1)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| TrainError::io(path, e))
}

/// Trains and evaluates, writing the step log, checkpoint and report to
/// whichever paths are configured.
pub fn execute(run: &RunConfig, mut on_step: impl FnMut(&StepLog)) -> Result<RunOutcome> {
    run.validate()?;
    let train_corpus = training_corpus(run)?;
    let eval_corpus = evaluation_corpus(run)?;
    let mut log_file = match &run.paths.log {
        Some(p) => Some((p, BufWriter::new(std::fs::File::create(p).map_err(|e| TrainError::io(p, e))?))),
        None => None,
    };
    let mut log_err = None;
    let trained = train(run, &train_corpus, |s| {
        if let Some((p, f)) = log_file.as_mut() {
            let line = serde_json::to_string(s).expect("step serializes");
            if let Err(e) = writeln!(f, "{line}") {
                log_err.get_or_insert(TrainError::io(p.as_path(), e));
            }
        }
        on_step(s);
    })?;
    if let Some((p, mut f)) = log_file {
        f.flush().map_err(|e| TrainError::io(p, e))?;
    }
    if let Some(e) = log_err {
        return Err(e);
    }
    let eval = evaluate(trained.params(), trained.model(), &eval_corpus, run.data.eval_mode)?;
    let report = RunReport {
        seed: run.seed,
        steps: trained.checkpoint.step,
        train_docs: train_corpus.len(),
        eval_docs: eval_corpus.len(),
        mode: run.data.eval_mode,
        first_loss: trained.log.first().map(|s| s.losses.total),
        final_loss: trained.log.last().map(|s| s.losses.total),
        eval,
    };
    if let Some(p) = &run.paths.checkpoint {
        trained.checkpoint.save(p)?;
    }
    if let Some(p) = &run.paths.report {
        write_json(p, &report)?;
    }
    Ok(RunOutcome { trained, train_corpus, eval_corpus, report })
}
