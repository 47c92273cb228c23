//! Binary checkpoints: an 8-byte little-endian header length, a JSON header
//! (run and model configuration, step, RNG positions and a tensor manifest),
//! then every tensor as little-endian `f64` in manifest order.

use std::io::Write;
use std::path::Path;

use mmie_core::{DenseArray, ParamTree};
use mmie_model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::config::{OptimConfig, RunConfig};
use crate::error::{Result, TrainError};
use crate::rng::RngState;

pub const FORMAT: &str = "mmie-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorGroup {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub group: TensorGroup,
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStates {
    pub shuffle: RngState,
    pub noise: RngState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    run: RunConfig,
    model: ModelConfig,
    step: u64,
    epoch: usize,
    rng: RngStates,
    optim: OptimConfig,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub run: RunConfig,
    pub model: ModelConfig,
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: RngStates,
    pub params: ParamTree,
    pub optimizer: Adam,
}

fn groups(ckpt: &Checkpoint) -> [(TensorGroup, &ParamTree); 3] {
    let (m, v) = ckpt.optimizer.moments();
    [(TensorGroup::Param, &ckpt.params), (TensorGroup::AdamM, m), (TensorGroup::AdamV, v)]
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (group, tree) in groups(self) {
            for (name, e) in tree.iter() {
                tensors.push(TensorMeta {
                    group,
                    name: name.to_string(),
                    shape: e.value.shape().to_vec(),
                    dtype: "f64le".into(),
                    trainable: e.trainable,
                });
                for v in e.value.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            run: self.run.clone(),
            model: self.model.clone(),
            step: self.step,
            epoch: self.epoch,
            rng: self.rng.clone(),
            optim: self.optimizer.config.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| TrainError::Checkpoint(m.to_string());
        let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| bad("truncated length prefix"))?.try_into().unwrap();
        let len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("header too large"))?;
        let end = 8usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[8..end]).map_err(|e| TrainError::Checkpoint(format!("bad header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let mut trees = [ParamTree::new(), ParamTree::new(), ParamTree::new()];
        let mut chunks = bytes[end..].chunks_exact(8);
        for t in &header.tensors {
            if t.dtype != "f64le" {
                return Err(TrainError::Checkpoint(format!("unsupported dtype `{}`", t.dtype)));
            }
            let n: usize = t.shape.iter().product();
            let data: Vec<f64> = chunks
                .by_ref()
                .take(n)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if data.len() != n {
                return Err(bad("truncated tensor payload"));
            }
            let arr = DenseArray::new(t.shape.clone(), data).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
            let slot = match t.group {
                TensorGroup::Param => 0,
                TensorGroup::AdamM => 1,
                TensorGroup::AdamV => 2,
            };
            trees[slot]
                .insert(t.name.clone(), arr, t.trainable)
                .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        }
        if chunks.len() != 0 || !chunks.remainder().is_empty() {
            return Err(bad("trailing bytes after tensor payload"));
        }
        let [params, m, v] = trees;
        if !params.same_layout(&m) || !params.same_layout(&v) {
            return Err(bad("optimizer state does not match the parameters"));
        }
        Ok(Self {
            run: header.run,
            model: header.model,
            step: header.step,
            epoch: header.epoch,
            rng: header.rng,
            params,
            optimizer: Adam::from_parts(header.optim, header.step, m, v),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| TrainError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use mmie_model::init_params;

    fn sample() -> Checkpoint {
        let run = RunConfig::default();
        let model = run.model_config(vec!["R0".into()]);
        let mut params = init_params(&model, 3).unwrap();
        // values whose decimal form would not round-trip through text naively
        params.get_mut("heads.crf.trans").unwrap().data_mut()[0] = 0.1 + 0.2;
        params.get_mut("heads.crf.trans").unwrap().data_mut()[1] = -0.0;
        params.get_mut("heads.crf.trans").unwrap().data_mut()[2] = f64::MIN_POSITIVE / 3.0;
        let optimizer = Adam::new(run.optim.clone(), &params);
        Checkpoint {
            rng: RngStates {
                shuffle: RngState::capture(&substream(1, Purpose::Shuffle)),
                noise: RngState::capture(&substream(1, Purpose::Noise)),
            },
            run,
            model,
            step: 12,
            epoch: 1,
            params,
            optimizer,
        }
    }

    fn bits(t: &ParamTree) -> Vec<(String, Vec<u64>, bool)> {
        t.iter()
            .map(|(n, e)| (n.to_string(), e.value.data().iter().map(|v| v.to_bits()).collect(), e.trainable))
            .collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(bits(&back.params), bits(&c.params));
        assert_eq!((back.step, back.epoch, &back.rng, &back.run, &back.model), (12, 1, &c.rng, &c.run, &c.model));
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn rejects_damaged_files() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..4]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut wrong = bytes;
        let start = 8 + wrong[8..].windows(FORMAT.len()).position(|w| w == FORMAT.as_bytes()).unwrap();
        wrong[start] = b'x';
        assert!(matches!(Checkpoint::from_bytes(&wrong), Err(TrainError::Checkpoint(_))));
    }
}
