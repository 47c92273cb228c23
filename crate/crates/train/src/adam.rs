//! Bias-corrected Adam with separate encoder and non-encoder learning rates.

use mmie_core::ParamTree;
use mmie_model::is_encoder_param;
use serde::{Deserialize, Serialize};

use crate::config::OptimConfig;
use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: OptimConfig,
    pub step: u64,
    m: ParamTree,
    v: ParamTree,
}

impl Adam {
    pub fn new(config: OptimConfig, params: &ParamTree) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub(crate) fn from_parts(config: OptimConfig, step: u64, m: ParamTree, v: ParamTree) -> Self {
        Self { config, step, m, v }
    }

    /// First and second moment estimates.
    pub fn moments(&self) -> (&ParamTree, &ParamTree) {
        (&self.m, &self.v)
    }

    pub fn lr_for(&self, name: &str) -> f64 {
        if is_encoder_param(name) {
            self.config.lr_encoder
        } else {
            self.config.lr_other
        }
    }

    /// One update of every trainable parameter. Gradients are checked before
    /// anything is modified, so a failed step leaves `params` untouched.
    pub fn step(&mut self, params: &mut ParamTree, grads: &ParamTree, doc: &str) -> Result<()> {
        if !params.same_layout(grads) {
            return Err(TrainError::Config("gradient tree does not match the parameters".into()));
        }
        for (name, g) in grads.iter() {
            if !g.value.is_finite() {
                return Err(TrainError::NonFiniteGradient {
                    param: name.to_string(),
                    step: self.step + 1,
                    doc: doc.to_string(),
                });
            }
        }
        self.step += 1;
        let OptimConfig { beta1, beta2, eps, clip_norm, .. } = self.config;
        let norm = grads
            .iter()
            .filter(|(n, _)| params.entry(n).is_some_and(|e| e.trainable))
            .flat_map(|(_, g)| g.value.data().iter().map(|v| v * v))
            .sum::<f64>()
            .sqrt();
        let scale = match clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        let lrs: Vec<f64> = params.names().map(|n| self.lr_for(n)).collect();
        let it = params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .zip(lrs);
        for ((((_, p), (_, g)), ((_, m), (_, v))), lr) in it {
            if !p.trainable {
                continue;
            }
            let p = p.value.data_mut();
            let (m, v) = (m.value.data_mut(), v.value.data_mut());
            for i in 0..p.len() {
                let gi = scale * g.value.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
