//! Named layers built on the tape, plus matching initializers.
//!
//! Every layer takes a parameter prefix and looks up its arrays by fixed
//! suffixes, so the initializer and the forward pass agree on names:
//!
//! | layer        | parameters                                  |
//! |--------------|---------------------------------------------|
//! | linear       | `{p}.w` `[d_in, d_out]`, `{p}.b` `[d_out]`  |
//! | layer norm   | `{p}.gamma`, `{p}.beta`                     |
//! | attention    | linear layers `{p}.q`, `{p}.v`, `{p}.o`; weight `{p}.k.w` |
//! | feed-forward | linear layers `{p}.fc1`, `{p}.fc2`          |
//! | conv1d       | `{p}.w` `[width * d_in, d_out]`, `{p}.b`    |

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::array::DenseArray;
use crate::error::{NumericError, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamTree;

pub fn linear(g: &mut Graph, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(&format!("{prefix}.w"))?;
    let b = g.param(&format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

/// `x · W` for a bias-free weight stored under its full name.
pub fn project(g: &mut Graph, name: &str, x: Var) -> Result<Var> {
    let w = g.param(name)?;
    g.matmul(x, w)
}

pub fn layer_norm(g: &mut Graph, prefix: &str, x: Var) -> Result<Var> {
    let gamma = g.param(&format!("{prefix}.gamma"))?;
    let beta = g.param(&format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta)
}

/// Two-layer GELU feed-forward network.
pub fn ffn(g: &mut Graph, prefix: &str, x: Var) -> Result<Var> {
    let h = linear(g, &format!("{prefix}.fc1"), x)?;
    let h = g.gelu(h);
    linear(g, &format!("{prefix}.fc2"), h)
}

/// Scaled dot-product attention with per-head slices of the query, key and
/// value projections followed by an output projection. Scores are scaled by
/// `1/sqrt(d / heads)`. No residual is applied here.
pub fn multi_head_attention(g: &mut Graph, prefix: &str, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    multi_head_attention_masked(g, prefix, q, k, v, heads, None)
}

/// Additive score mask letting each row attend only within its own
/// contiguous segment (block-diagonal attention).
pub fn segment_mask(segments: &[usize]) -> DenseArray {
    let n: usize = segments.iter().sum();
    let mut m = DenseArray::full(&[n, n], MASKED);
    let mut start = 0;
    for &len in segments {
        for r in start..start + len {
            m.row_mut(r)[start..start + len].iter_mut().for_each(|v| *v = 0.0);
        }
        start += len;
    }
    m
}

/// Score offset for disallowed attention pairs; `exp` of it underflows to 0.
pub const MASKED: f64 = -1e30;

/// [`multi_head_attention`] with an optional additive `[n_q, n_k]` score mask.
pub fn multi_head_attention_masked(
    g: &mut Graph,
    prefix: &str,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: Option<&DenseArray>,
) -> Result<Var> {
    let d = g.value(q).cols();
    if heads == 0 || d % heads != 0 {
        return Err(NumericError::Config(format!(
            "attention width {d} is not divisible by {heads} heads"
        )));
    }
    let head_dim = d / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q = linear(g, &format!("{prefix}.q"), q)?;
    // a key bias only shifts each query's scores uniformly, so it is omitted
    let k = project(g, &format!("{prefix}.k.w"), k)?;
    let v = linear(g, &format!("{prefix}.v"), v)?;
    let mask = mask.map(|m| g.constant(m.clone()));
    let mut outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let mut scores = g.scale(scores, scale);
        if let Some(m) = mask {
            scores = g.add(scores, m)?;
        }
        let weights = g.softmax_rows(scores)?;
        outputs.push(g.matmul(weights, vh)?);
    }
    let merged = if heads == 1 { outputs[0] } else { g.concat_cols(&outputs)? };
    linear(g, &format!("{prefix}.o"), merged)
}

/// Same-length sequence convolution with zero padding.
pub fn conv1d(g: &mut Graph, prefix: &str, x: Var, width: usize) -> Result<Var> {
    let cols = g.im2col(x, width)?;
    linear(g, prefix, cols)
}

/// Value-level wrapper around [`multi_head_attention`] for callers that do
/// not need gradients.
pub fn attention_forward(
    params: &ParamTree,
    prefix: &str,
    q: &DenseArray,
    k: &DenseArray,
    v: &DenseArray,
    heads: usize,
) -> Result<DenseArray> {
    let mut g = Graph::with_params(params);
    let (q, k, v) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let out = multi_head_attention(&mut g, prefix, q, k, v, heads)?;
    Ok(g.value(out).clone())
}

/// Writes freshly initialized parameters into a tree.
pub struct Initializer<'a, R: Rng> {
    pub tree: &'a mut ParamTree,
    pub rng: &'a mut R,
}

impl<'a, R: Rng> Initializer<'a, R> {
    pub fn new(tree: &'a mut ParamTree, rng: &'a mut R) -> Self {
        Self { tree, rng }
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<()> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| NumericError::Config(e.to_string()))?;
        let data = (0..n).map(|_| dist.sample(self.rng)).collect();
        self.tree.insert(name, DenseArray::new(shape.to_vec(), data)?, true)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        self.tree.insert(name, DenseArray::full(shape, value), true)
    }

    /// `[d_in, d_out]` weight with std `1/sqrt(d_in)` and a zero bias.
    pub fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) -> Result<()> {
        self.normal(&format!("{prefix}.w"), &[d_in, d_out], 1.0 / (d_in as f64).sqrt())?;
        self.constant(&format!("{prefix}.b"), &[d_out], 0.0)
    }

    pub fn layer_norm(&mut self, prefix: &str, d: usize) -> Result<()> {
        self.constant(&format!("{prefix}.gamma"), &[d], 1.0)?;
        self.constant(&format!("{prefix}.beta"), &[d], 0.0)
    }

    pub fn attention(&mut self, prefix: &str, d: usize) -> Result<()> {
        for part in ["q", "v", "o"] {
            self.linear(&format!("{prefix}.{part}"), d, d)?;
        }
        self.normal(&format!("{prefix}.k.w"), &[d, d], 1.0 / (d as f64).sqrt())
    }

    pub fn ffn(&mut self, prefix: &str, d: usize, hidden: usize) -> Result<()> {
        self.linear(&format!("{prefix}.fc1"), d, hidden)?;
        self.linear(&format!("{prefix}.fc2"), hidden, d)
    }

    pub fn conv1d(&mut self, prefix: &str, width: usize, d_in: usize, d_out: usize) -> Result<()> {
        if width % 2 == 0 {
            return Err(NumericError::Config(format!("convolution width must be odd, got {width}")));
        }
        self.linear(prefix, width * d_in, d_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_attention(d: usize) -> ParamTree {
        let mut t = ParamTree::new();
        for part in ["q", "k", "v", "o"] {
            t.insert(format!("att.{part}.w"), DenseArray::eye(d), true).unwrap();
            if part != "k" {
                t.insert(format!("att.{part}.b"), DenseArray::zeros(&[d]), true).unwrap();
            }
        }
        t
    }

    #[test]
    fn single_key_returns_projected_value() {
        let mut t = ParamTree::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Initializer::new(&mut t, &mut rng).attention("att", 4).unwrap();
        let q = DenseArray::from_rows(&[vec![0.3, -1.0, 2.0, 0.1], vec![5.0, 0.0, 0.0, 1.0]]);
        let kv = DenseArray::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]);
        let out = attention_forward(&t, "att", &q, &kv, &kv, 2).unwrap();
        let v = kv.matmul(t.get("att.v.w").unwrap()).unwrap();
        let expected = v.matmul(t.get("att.o.w").unwrap()).unwrap();
        for r in 0..2 {
            for c in 0..4 {
                assert!((out.at(r, c) - expected.at(0, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_values_give_output_bias() {
        let mut t = ParamTree::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        Initializer::new(&mut t, &mut rng).attention("att", 4).unwrap();
        t.set("att.o.b", DenseArray::new(vec![4], vec![0.5, -0.5, 1.0, 2.0]).unwrap()).unwrap();
        let q = DenseArray::full(&[3, 4], 0.7);
        let k = DenseArray::full(&[2, 4], -0.2);
        let out = attention_forward(&t, "att", &q, &k, &DenseArray::zeros(&[2, 4]), 4).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), &[0.5, -0.5, 1.0, 2.0]);
        }
    }

    #[test]
    fn uniform_scores_average_values() {
        let t = identity_attention(2);
        // q orthogonal to both keys' difference -> equal scores
        let q = DenseArray::from_rows(&[vec![1.0, 1.0]]);
        let k = DenseArray::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let v = DenseArray::from_rows(&[vec![2.0, 4.0], vec![6.0, 0.0]]);
        let out = attention_forward(&t, "att", &q, &k, &v, 1).unwrap();
        assert!((out.at(0, 0) - 4.0).abs() < 1e-12);
        assert!((out.at(0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn heads_must_divide_width() {
        let t = identity_attention(4);
        let x = DenseArray::zeros(&[1, 4]);
        let err = attention_forward(&t, "att", &x, &x, &x, 3).unwrap_err();
        assert!(matches!(err, NumericError::Config(_)));
    }

    #[test]
    fn attention_is_deterministic() {
        let mut t = ParamTree::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        Initializer::new(&mut t, &mut rng).attention("att", 8).unwrap();
        let x = DenseArray::new(vec![3, 8], (0..24).map(|i| (i as f64).cos()).collect()).unwrap();
        let a = attention_forward(&t, "att", &x, &x, &x, 2).unwrap();
        let b = attention_forward(&t, "att", &x, &x, &x, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn segment_mask_isolates_blocks() {
        let mut t = ParamTree::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        Initializer::new(&mut t, &mut rng).attention("att", 4).unwrap();
        let a = DenseArray::new(vec![2, 4], (0..8).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let b = DenseArray::new(vec![3, 4], (0..12).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let both = DenseArray::new(vec![5, 4], [a.data(), b.data()].concat()).unwrap();
        let mut g = Graph::with_params(&t);
        let x = g.constant(both);
        let m = segment_mask(&[2, 3]);
        let out = multi_head_attention_masked(&mut g, "att", x, x, x, 2, Some(&m)).unwrap();
        let alone = attention_forward(&t, "att", &a, &a, &a, 2).unwrap();
        assert_eq!(&g.value(out).data()[..8], alone.data());
    }

    #[test]
    fn even_conv_width_is_a_config_error() {
        let mut t = ParamTree::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Initializer::new(&mut t, &mut rng).conv1d("c", 2, 3, 3).is_err());
    }
}
