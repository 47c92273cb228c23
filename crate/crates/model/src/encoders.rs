//! Stand-in hierarchical encoders: pre-norm transformer stacks over token
//! embeddings and over per-frame patch projections, returning every layer's
//! output so that [`bucket`] can average them into low/mid/high levels.
//!
//! Frame features are handled as `[n_g * n_p, d_h]` matrices, frame-major.
//! Patches attend only within their own frame.

use mmie_core::nn::{self, Initializer};
use mmie_core::{DenseArray, Graph, ParamTree, Var};
use mmie_data::vocab::token_id;
use mmie_data::Frame;
use rand::Rng;

use crate::config::Dims;
use crate::error::{ModelError, Result};

pub const TEXT: &str = "encoder.text";
pub const FRAMES: &str = "encoder.frames";

/// Low/mid/high level features plus the final-layer base feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels<T> {
    pub low: T,
    pub mid: T,
    pub high: T,
    pub base: T,
}

impl<T> Levels<T> {
    pub fn levels(&self) -> [(&'static str, &T); 3] {
        [("low", &self.low), ("mid", &self.mid), ("high", &self.high)]
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Levels<U> {
        Levels {
            low: f(&self.low),
            mid: f(&self.mid),
            high: f(&self.high),
            base: f(&self.base),
        }
    }
}

pub type LevelFeatures = Levels<DenseArray>;

pub(crate) fn init<R: Rng>(init: &mut Initializer<'_, R>, d: &Dims) -> Result<()> {
    init.normal(&format!("{TEXT}.embed"), &[d.vocab, d.d_h], 1.0)?;
    init.normal(&format!("{TEXT}.pos"), &[d.max_len, d.d_h], 0.1)?;
    init.linear(&format!("{FRAMES}.proj"), d.d_in, d.d_h)?;
    init.normal(&format!("{FRAMES}.pos"), &[d.n_p, d.d_h], 0.5)?;
    for prefix in [TEXT, FRAMES] {
        for l in 0..d.n_l {
            let p = format!("{prefix}.layer{l}");
            init.layer_norm(&format!("{p}.ln1"), d.d_h)?;
            init.attention(&format!("{p}.attn"), d.d_h)?;
            init.layer_norm(&format!("{p}.ln2"), d.d_h)?;
            init.ffn(&format!("{p}.ffn"), d.d_h, 4 * d.d_h)?;
            init.layer_norm(&format!("{p}.ln_out"), d.d_h)?;
        }
    }
    Ok(())
}

fn block(g: &mut Graph, prefix: &str, x: Var, heads: usize, mask: Option<&DenseArray>) -> Result<Var> {
    let h = nn::layer_norm(g, &format!("{prefix}.ln1"), x)?;
    let a = nn::multi_head_attention_masked(g, &format!("{prefix}.attn"), h, h, h, heads, mask)?;
    let x = g.add(x, a)?;
    let h = nn::layer_norm(g, &format!("{prefix}.ln2"), x)?;
    let f = nn::ffn(g, &format!("{prefix}.ffn"), h)?;
    Ok(g.add(x, f)?)
}

fn stack(g: &mut Graph, prefix: &str, mut x: Var, d: &Dims, mask: Option<&DenseArray>) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(d.n_l);
    for l in 0..d.n_l {
        let p = format!("{prefix}.layer{l}");
        x = block(g, &p, x, d.heads, mask)?;
        // the residual stream stays raw; exposed features are normalized
        out.push(nn::layer_norm(g, &format!("{p}.ln_out"), x)?);
    }
    Ok(out)
}

/// Per-layer `[n_x, d_h]` text features. Unknown tokens are hash-bucketed.
pub fn text_layers(g: &mut Graph, d: &Dims, tokens: &[String]) -> Result<Vec<Var>> {
    if tokens.is_empty() {
        return Err(ModelError::Config("cannot encode an empty token sequence".into()));
    }
    if tokens.len() > d.max_len {
        return Err(ModelError::Config(format!(
            "{} tokens exceed max_len = {}",
            tokens.len(),
            d.max_len
        )));
    }
    let ids: Vec<usize> = tokens.iter().map(|t| token_id(t, d.vocab)).collect();
    let embed = g.param(&format!("{TEXT}.embed"))?;
    let x = g.gather_rows(embed, &ids)?;
    let pos = g.param(&format!("{TEXT}.pos"))?;
    let pos = g.slice_rows(pos, 0, ids.len())?;
    let x = g.add(x, pos)?;
    stack(g, TEXT, x, d, None)
}

/// Frames as one `[n_g * n_p, d_in]` matrix.
pub fn frame_matrix(frames: &[Frame], d: &Dims) -> Result<DenseArray> {
    if frames.is_empty() {
        return Err(ModelError::Config("cannot encode an empty frame sequence".into()));
    }
    let mut data = Vec::with_capacity(frames.len() * d.n_p * d.d_in);
    for (f, frame) in frames.iter().enumerate() {
        if frame.patches.len() != d.n_p || frame.patches.iter().any(|p| p.len() != d.d_in) {
            return Err(ModelError::Config(format!(
                "frame {f} is not a grid of {} patches of width {}",
                d.n_p, d.d_in
            )));
        }
        data.extend(frame.patches.iter().flatten());
    }
    Ok(DenseArray::new(vec![frames.len() * d.n_p, d.d_in], data)?)
}

/// Per-layer `[n_g * n_p, d_h]` frame features.
pub fn frame_layers(g: &mut Graph, d: &Dims, frames: &[Frame]) -> Result<Vec<Var>> {
    let n_g = frames.len();
    let x = g.constant(frame_matrix(frames, d)?);
    let x = nn::linear(g, &format!("{FRAMES}.proj"), x)?;
    let pos = g.param(&format!("{FRAMES}.pos"))?;
    let pos = g.concat_rows(&vec![pos; n_g])?;
    let x = g.add(x, pos)?;
    let mask = (n_g > 1).then(|| nn::segment_mask(&vec![d.n_p; n_g]));
    stack(g, FRAMES, x, d, mask.as_ref())
}

fn bucket_bounds(n_l: usize) -> Result<[(usize, usize); 3]> {
    if n_l == 0 || n_l % 3 != 0 {
        return Err(ModelError::Config(format!("{n_l} layers do not split into three levels")));
    }
    let t = n_l / 3;
    Ok([(0, t), (t, 2 * t), (2 * t, n_l)])
}

/// Non-overlapping thirds of the layer stack, each averaged; base is the
/// last layer.
pub fn bucket(g: &mut Graph, layers: &[Var]) -> Result<Levels<Var>> {
    let bounds = bucket_bounds(layers.len())?;
    let mut mean = |(lo, hi): (usize, usize)| -> Result<Var> {
        let s = g.add_all(&layers[lo..hi])?;
        Ok(g.scale(s, 1.0 / (hi - lo) as f64))
    };
    Ok(Levels {
        low: mean(bounds[0])?,
        mid: mean(bounds[1])?,
        high: mean(bounds[2])?,
        base: *layers.last().expect("non-empty"),
    })
}

/// Value-level [`bucket`]; works for any common layer shape.
pub fn bucket_levels(per_layer: &[DenseArray]) -> Result<LevelFeatures> {
    let bounds = bucket_bounds(per_layer.len())?;
    let mean = |(lo, hi): (usize, usize)| -> Result<DenseArray> {
        let mut acc = per_layer[lo].clone();
        for layer in &per_layer[lo + 1..hi] {
            if layer.shape() != acc.shape() {
                return Err(ModelError::Config("layer outputs differ in shape".into()));
            }
            acc.add_assign(layer);
        }
        Ok(acc.scale(1.0 / (hi - lo) as f64))
    };
    Ok(Levels {
        low: mean(bounds[0])?,
        mid: mean(bounds[1])?,
        high: mean(bounds[2])?,
        base: per_layer.last().expect("non-empty").clone(),
    })
}

/// Every layer's `[n_x, d_h]` text output.
pub fn encode_text(tokens: &[String], params: &ParamTree, d: &Dims) -> Result<Vec<DenseArray>> {
    let mut g = Graph::with_params(params);
    let layers = text_layers(&mut g, d, tokens)?;
    Ok(layers.into_iter().map(|v| g.value(v).clone()).collect())
}

/// Every layer's `[n_g, n_p, d_h]` frame output.
pub fn encode_frames(frames: &[Frame], params: &ParamTree, d: &Dims) -> Result<Vec<DenseArray>> {
    let mut g = Graph::with_params(params);
    let layers = frame_layers(&mut g, d, frames)?;
    layers
        .into_iter()
        .map(|v| Ok(g.value(v).clone().reshape(&[frames.len(), d.n_p, d.d_h])?))
        .collect()
}
