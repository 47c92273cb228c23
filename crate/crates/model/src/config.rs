use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Layer sizes shared by every module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dims {
    pub d_h: usize,
    /// Encoder depth; must split into three equal level buckets.
    pub n_l: usize,
    pub heads: usize,
    /// Patches per frame.
    pub n_p: usize,
    /// Patch feature width.
    pub d_in: usize,
    pub vocab: usize,
    pub max_len: usize,
    pub d_vae: usize,
    pub max_frames: usize,
    pub conv_width: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d_h: 32,
            n_l: 6,
            heads: 4,
            n_p: 16,
            d_in: 8,
            vocab: 256,
            max_len: 512,
            d_vae: 16,
            max_frames: 16,
            conv_width: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VaeMode {
    /// Latent = mean head output (deterministic).
    #[default]
    Mean,
    /// Latent = mean + exp(log_var / 2) · ε.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramePositions {
    #[default]
    Learned,
    Sinusoidal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DffmConfig {
    /// `false` replaces level fusion by the mixed base features alone.
    pub enabled: bool,
    pub vae_mode: VaeMode,
    pub kl_weight: f64,
    pub positions: FramePositions,
}

impl Default for DffmConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            vae_mode: VaeMode::Mean,
            kl_weight: 0.0,
            positions: FramePositions::Learned,
        }
    }
}

impl DffmConfig {
    /// The log-variance heads only matter when sampling or penalizing KL.
    pub fn uses_log_var(&self) -> bool {
        self.vae_mode == VaeMode::Sample || self.kl_weight > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmcmConfig {
    /// `false` blank-fills missing modalities with zeros.
    pub enabled: bool,
    pub prompt_len: usize,
}

impl Default for MmcmConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            prompt_len: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub ent: f64,
    pub cha: f64,
    pub rel: f64,
    pub gro_t: f64,
    pub gro_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ent: 1.0,
            cha: 1.0,
            rel: 1.0,
            gro_t: 1.0,
            gro_b: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: LossWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: Dims,
    /// Relation label inventory; output class `k + 1` is `relations[k]`,
    /// class 0 is "no relation".
    pub relations: Vec<String>,
    pub dffm: DffmConfig,
    pub mmcm: MmcmConfig,
    pub loss: LossConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dims: Dims::default(),
            relations: vec!["R0".into(), "R1".into()],
            dffm: DffmConfig::default(),
            mmcm: MmcmConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        let bad = |m: String| Err(ModelError::Config(m));
        if d.d_h == 0 || d.heads == 0 || d.d_h % d.heads != 0 {
            return bad(format!("d_h = {} must be a positive multiple of heads = {}", d.d_h, d.heads));
        }
        if d.n_l == 0 || d.n_l % 3 != 0 {
            return bad(format!("n_l = {} must be a positive multiple of 3", d.n_l));
        }
        if d.d_vae == 0 || d.d_vae >= d.d_h || d.d_vae % d.heads != 0 {
            return bad(format!(
                "d_vae = {} must be below d_h = {} and a multiple of heads = {}",
                d.d_vae, d.d_h, d.heads
            ));
        }
        if d.n_p == 0 || d.d_in == 0 || d.vocab == 0 || d.max_len == 0 || d.max_frames == 0 {
            return bad("n_p, d_in, vocab, max_len and max_frames must be positive".into());
        }
        if d.conv_width % 2 == 0 {
            return bad(format!("conv_width = {} must be odd", d.conv_width));
        }
        if self.mmcm.prompt_len == 0 {
            return bad("mmcm.prompt_len must be at least 1".into());
        }
        if !(self.dffm.kl_weight >= 0.0 && self.dffm.kl_weight.is_finite()) {
            return bad(format!("dffm.kl_weight = {} must be finite and non-negative", self.dffm.kl_weight));
        }
        let mut sorted = self.relations.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.relations.len() {
            return bad("relation labels must be distinct".into());
        }
        Ok(())
    }

    pub fn num_relation_classes(&self) -> usize {
        self.relations.len() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_dims() {
        let mut c = ModelConfig::default();
        c.dims.n_l = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.dims.d_vae = 32;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.mmcm.prompt_len = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.relations.push("R0".into());
        assert!(c.validate().is_err());
    }
}
