use std::path::{Path, PathBuf};

use mmie_data::GenConfig;
use mmie_model::{DffmConfig, Dims, LossConfig, MmcmConfig, ModelConfig, PairMode};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// When set, gradients are rescaled so their global L2 norm is at most
    /// this before the moment updates.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr_encoder: 1e-3,
            lr_other: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stops early once this many optimizer steps have run.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `(full, no_text, no_video)`; when set, modality masks are reassigned
    /// with these proportions before training and evaluation.
    pub regime_fractions: Option<(f64, f64, f64)>,
    /// Size of the generated held-out corpus used when no evaluation corpus
    /// path is given.
    pub eval_docs: usize,
    pub eval_mode: PairMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            regime_fractions: None,
            eval_docs: 64,
            eval_mode: PairMode::GoldPairs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Relation inventory; taken from the training corpus when absent.
    pub relations: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Training corpus (JSON Lines); generated from `[gen]` when absent.
    pub corpus: Option<PathBuf>,
    /// Evaluation corpus; a held-out corpus is generated when absent.
    pub eval_corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Per-step training log (JSON Lines).
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PromptLen,
    MissingRatio,
    MmcmOnOff,
    DffmOnOff,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::PromptLen => "prompt_len",
            SweepAxis::MissingRatio => "missing_ratio",
            SweepAxis::MmcmOnOff => "mmcm_on_off",
            SweepAxis::DffmOnOff => "dffm_on_off",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prompt_len" => Ok(SweepAxis::PromptLen),
            "missing_ratio" => Ok(SweepAxis::MissingRatio),
            "mmcm_on_off" => Ok(SweepAxis::MmcmOnOff),
            "dffm_on_off" => Ok(SweepAxis::DffmOnOff),
            other => Err(TrainError::Config(format!(
                "unknown sweep axis `{other}` (expected prompt_len, missing_ratio, mmcm_on_off or dffm_on_off)"
            ))),
        }
    }

    /// Values swept when none are given.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::PromptLen => vec![2.0, 4.0, 8.0, 16.0, 32.0],
            SweepAxis::MissingRatio => vec![0.0, 0.5, 1.0],
            SweepAxis::MmcmOnOff | SweepAxis::DffmOnOff => vec![1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Option<Vec<f64>>,
    /// Runs per value, with seeds `seed, seed + 1, ...`.
    pub seeds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::MmcmOnOff,
            values: None,
            seeds: 3,
        }
    }
}

/// Everything one run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: Dims,
    pub labels: LabelConfig,
    pub dffm: DffmConfig,
    pub mmcm: MmcmConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub gen: GenConfig,
    pub paths: PathConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: Dims::default(),
            labels: LabelConfig::default(),
            dffm: DffmConfig::default(),
            mmcm: MmcmConfig::default(),
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            gen: GenConfig::default(),
            paths: PathConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(vec![]).validate()?;
        self.gen.validate()?;
        if self.gen.n_p != self.model.n_p || self.gen.d_in != self.model.d_in {
            return Err(TrainError::Config(format!(
                "generator grid ({} patches of width {}) disagrees with the model ({} of width {})",
                self.gen.n_p, self.gen.d_in, self.model.n_p, self.model.d_in
            )));
        }
        let o = &self.optim;
        let positive = [o.lr_encoder, o.lr_other, o.eps].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !positive || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(TrainError::Config("optimizer settings out of range".into()));
        }
        if let Some(f) = self.data.regime_fractions {
            mmie_data::regime_counts(1, f)?;
        }
        let p = &self.paths;
        let paths: Vec<&PathBuf> = [&p.corpus, &p.eval_corpus, &p.checkpoint, &p.report, &p.log]
            .into_iter()
            .flatten()
            .collect();
        for (i, a) in paths.iter().enumerate() {
            if paths[..i].contains(a) {
                return Err(TrainError::Config(format!("path {} is used twice", a.display())));
            }
        }
        if self.sweep.seeds == 0 {
            return Err(TrainError::Config("sweep.seeds must be at least 1".into()));
        }
        Ok(())
    }

    /// The model configuration with the given relation inventory (unless the
    /// config pins one).
    pub fn model_config(&self, corpus_relations: Vec<String>) -> ModelConfig {
        ModelConfig {
            dims: self.model.clone(),
            relations: self.labels.relations.clone().unwrap_or(corpus_relations),
            dffm: self.dffm.clone(),
            mmcm: self.mmcm.clone(),
            loss: self.loss.clone(),
        }
    }
}
