//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the tape in reverse, applying each node's
//! vector-Jacobian product. Nodes that do not depend on a trainable leaf are
//! skipped entirely, so constants and frozen parameters cost nothing on the
//! way back.

use std::collections::BTreeMap;

use crate::array::{self, DenseArray};
use crate::error::{NumericError, Result};
use crate::params::ParamTree;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A user-defined differentiable operation.
///
/// The forward value is computed by the caller and handed to
/// [`Graph::custom`]; only the backward rule lives here.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradient for each input given the upstream gradient of the output.
    /// `None` means "no contribution".
    fn backward(&self, inputs: &[&DenseArray], output: &DenseArray, grad: &DenseArray) -> Vec<Option<DenseArray>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Exp(Var),
    Abs(Var),
    Transpose(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: DenseArray,
        inv_std: Vec<f64>,
    },
    Im2col(Var, usize),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: DenseArray,
    },
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

struct Node {
    value: DenseArray,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar output with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseArray> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// The tape. Parameters are bound lazily by name from an optional
/// [`ParamTree`]; each name maps to a single leaf however often it is used.
pub struct Graph<'p> {
    nodes: Vec<Node>,
    params: Option<&'p ParamTree>,
    bound: BTreeMap<String, Var>,
    branches: u64,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: None,
            bound: BTreeMap::new(),
            branches: BRANCH_SEED,
        }
    }

    pub fn with_params(params: &'p ParamTree) -> Self {
        Self {
            nodes: Vec::new(),
            params: Some(params),
            bound: BTreeMap::new(),
            branches: BRANCH_SEED,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Hash of the side taken at every kink (ReLU, abs) so far. Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> u64 {
        self.branches
    }

    fn record_branches(&mut self, x: Var) {
        let mut h = self.branches;
        for &v in self.nodes[x.0].value.data() {
            // FNV-1a over one bit per element
            h = (h ^ u64::from(v > 0.0)).wrapping_mul(0x0100_0000_01b3);
        }
        self.branches = h;
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: DenseArray, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, value: DenseArray, op: Op, input: Var) -> Var {
        let needs = self.needs(input);
        self.push(value, op, needs)
    }

    pub fn constant(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free leaf whose gradient will be tracked.
    pub fn variable(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds the named parameter, creating its leaf on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let tree = self.params.ok_or_else(|| NumericError::MissingParam(name.to_string()))?;
        let entry = tree
            .entry(name)
            .ok_or_else(|| NumericError::MissingParam(name.to_string()))?;
        let v = self.push(entry.value.clone(), Op::Leaf, entry.trainable);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Names of parameters touched by the forward pass so far.
    pub fn bound_params(&self) -> impl Iterator<Item = &str> {
        self.bound.keys().map(String::as_str)
    }

    /// Gradient tree aligned with the bound [`ParamTree`]: identical names and
    /// shapes, zeros for parameters the forward pass never touched.
    pub fn param_grads(&self, grads: &Gradients) -> ParamTree {
        let tree = self.params.expect("graph has no parameter tree");
        let mut out = tree.zeros_like();
        for (name, &v) in &self.bound {
            if let Some(g) = grads.get(v) {
                out.get_mut(name).expect("bound name exists").clone_from(g);
            }
        }
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    /// Adds a `[cols]` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let mut value = self.value(x).clone();
        array::add_row_bias(&mut value, self.value(bias))?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(value, Op::AddBias(x, bias), needs))
    }

    /// Sums a non-empty list of same-shaped nodes.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| NumericError::Config("add_all of an empty list".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).scale(c);
        self.push_unary(value, Op::Scale(x, c), x)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push_unary(value, Op::AddScalar(x), x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.record_branches(x);
        let value = self.value(x).map(|v| v.max(0.0));
        self.push_unary(value, Op::Relu(x), x)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self
            .value(x)
            .map(|v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()));
        self.push_unary(value, Op::Gelu(x), x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push_unary(value, Op::Sigmoid(x), x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push_unary(value, Op::Exp(x), x)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.record_branches(x);
        let value = self.value(x).map(f64::abs);
        self.push_unary(value, Op::Abs(x), x)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push_unary(value, Op::Transpose(x), x)
    }

    /// Rows `start .. start + len` of a matrix, or of a `[n]` vector viewed
    /// as `[n, 1]`-free rows when it is rank 2.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if start + len > src.rows() {
            return Err(NumericError::Dimension {
                op: "slice_rows",
                lhs: src.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let c = src.cols();
        let value = DenseArray::new(vec![len, c], src.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push_unary(value, Op::SliceRows(x, start), x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if start + len > src.cols() {
            return Err(NumericError::Dimension {
                op: "slice_cols",
                lhs: src.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(src.rows() * len);
        for r in 0..src.rows() {
            data.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let value = DenseArray::new(vec![src.rows(), len], data)?;
        Ok(self.push_unary(value, Op::SliceCols(x, start), x))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.check_concat(parts, "concat_rows", |a| a.cols())?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rows += self.value(p).rows();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let value = DenseArray::new(vec![rows, c], data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.check_concat(parts, "concat_cols", |a| a.rows())?;
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let value = DenseArray::new(vec![r, total], data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), needs))
    }

    fn check_concat(&self, parts: &[Var], op: &'static str, key: impl Fn(&DenseArray) -> usize) -> Result<usize> {
        let first = parts.first().ok_or_else(|| NumericError::Config(format!("{op} of nothing")))?;
        let k = key(self.value(*first));
        for &p in parts {
            if key(self.value(p)) != k {
                return Err(NumericError::Dimension {
                    op,
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
        }
        Ok(k)
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let src = self.value(x);
        let c = src.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= src.rows() {
                return Err(NumericError::Dimension {
                    op: "gather_rows",
                    lhs: src.shape().to_vec(),
                    rhs: vec![i],
                });
            }
            data.extend_from_slice(src.row(i));
        }
        let value = DenseArray::new(vec![idx.len(), c], data)?;
        Ok(self.push_unary(value, Op::GatherRows(x, idx.to_vec()), x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push_unary(value, Op::Reshape(x), x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let axis = src.shape().len().saturating_sub(1);
        let value = src.softmax(axis)?;
        Ok(self.push_unary(value, Op::SoftmaxRows(x), x))
    }

    /// Row-wise layer normalization with affine `gamma`/`beta` (`[cols]`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let src = self.value(x);
        let c = src.cols();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(NumericError::Dimension {
                op: "layer_norm",
                lhs: src.shape().to_vec(),
                rhs: self.value(gamma).shape().to_vec(),
            });
        }
        let mut xhat = src.clone();
        let mut inv_std = Vec::with_capacity(src.rows());
        for r in 0..src.rows() {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut value = xhat.clone();
        for r in 0..value.rows() {
            for (j, v) in value.row_mut(r).iter_mut().enumerate() {
                *v = *v * g[j] + b[j];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    /// Sliding-window unfold used by sequence convolutions.
    pub fn im2col(&mut self, x: Var, width: usize) -> Result<Var> {
        let value = array::im2col(self.value(x), width)?;
        Ok(self.push_unary(value, Op::Im2col(x, width), x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = DenseArray::scalar(self.value(x).sum());
        self.push_unary(value, Op::Sum(x), x)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let value = DenseArray::scalar(self.value(x).mean());
        self.push_unary(value, Op::Mean(x), x)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` (`[n, classes]`).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let src = self.value(logits);
        if src.rows() != targets.len() || targets.is_empty() {
            return Err(NumericError::Dimension {
                op: "cross_entropy",
                lhs: src.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let c = src.cols();
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(NumericError::Config(format!("target class {bad} out of range for {c} classes")));
        }
        let probs = src.as_matrix().softmax(1)?;
        let mut nll = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = src.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            nll += lse - row[t];
        }
        let value = DenseArray::scalar(nll / targets.len() as f64);
        Ok(self.push_unary(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            logits,
        ))
    }

    /// Registers a custom op whose forward value was computed by the caller.
    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var], value: DenseArray) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(value, Op::Custom(op, inputs.to_vec()), needs)
    }

    /// Reverse sweep from a one-element output.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<DenseArray>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(DenseArray::full(self.value(loss).shape(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &DenseArray, grads: &mut [Option<DenseArray>]) {
        let mut acc = |v: Var, contrib: DenseArray| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => {
                    *slot = Some(contrib.reshape(self.nodes[v.0].value.shape()).expect("gradient shape"))
                }
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.matmul_t(val(*b)).expect("matmul grad"));
                }
                if self.needs(*b) {
                    acc(*b, val(*a).t_matmul(g).expect("matmul grad"));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.mul(val(*b)).expect("mul grad"));
                }
                if self.needs(*b) {
                    acc(*b, g.mul(val(*a)).expect("mul grad"));
                }
            }
            Op::AddBias(x, b) => {
                acc(*x, g.clone());
                if self.needs(*b) {
                    acc(*b, g.col_sums());
                }
            }
            Op::Scale(x, c) => acc(*x, g.scale(*c)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::Relu(x) => {
                let d = g.zip_map(val(*x), "relu", |g, v| if v > 0.0 { g } else { 0.0 });
                acc(*x, d.expect("relu grad"));
            }
            Op::Gelu(x) => {
                let d = g.zip_map(val(*x), "gelu", |g, v| {
                    let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
                    let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                    g * (0.5 * (1.0 + t) + 0.5 * v * dt)
                });
                acc(*x, d.expect("gelu grad"));
            }
            Op::Sigmoid(x) => {
                let d = g.zip_map(&node.value, "sigmoid", |g, y| g * y * (1.0 - y));
                acc(*x, d.expect("sigmoid grad"));
            }
            Op::Exp(x) => acc(*x, g.mul(&node.value).expect("exp grad")),
            Op::Abs(x) => {
                let d = g.zip_map(val(*x), "abs", |g, v| {
                    if v > 0.0 {
                        g
                    } else if v < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                });
                acc(*x, d.expect("abs grad"));
            }
            Op::Transpose(x) => acc(*x, g.transpose()),
            Op::SliceRows(x, start) => {
                let src = val(*x);
                let c = src.cols();
                let mut d = DenseArray::zeros(&[src.rows(), c]);
                d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(*x, d);
            }
            Op::SliceCols(x, start) => {
                let src = val(*x);
                let mut d = DenseArray::zeros(&[src.rows(), src.cols()]);
                let w = g.cols();
                for r in 0..src.rows() {
                    d.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
                }
                acc(*x, d);
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).rows();
                    let d = DenseArray::new(vec![n, c], g.data()[offset * c..(offset + n) * c].to_vec());
                    acc(p, d.expect("concat grad"));
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut data = Vec::with_capacity(g.rows() * w);
                    for r in 0..g.rows() {
                        data.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    acc(p, DenseArray::new(vec![g.rows(), w], data).expect("concat grad"));
                    offset += w;
                }
            }
            Op::GatherRows(x, idx) => {
                let src = val(*x);
                let mut d = DenseArray::zeros(&[src.rows(), src.cols()]);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                acc(*x, d);
            }
            Op::Reshape(x) => acc(*x, g.clone()),
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for (o, (&gy, &yv)) in d.row_mut(r).iter_mut().zip(g.row(r).iter().zip(y.row(r))) {
                        *o = yv * (gy - dot);
                    }
                }
                acc(*x, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = xhat.cols();
                if self.needs(*beta) {
                    acc(*beta, g.col_sums());
                }
                if self.needs(*gamma) {
                    acc(*gamma, g.mul(xhat).expect("ln grad").col_sums());
                }
                if self.needs(*x) {
                    let gam = val(*gamma).data();
                    let mut d = DenseArray::zeros(&[xhat.rows(), c]);
                    for r in 0..xhat.rows() {
                        let dxhat: Vec<f64> = g.row(r).iter().zip(gam).map(|(a, b)| a * b).collect();
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                        let n = c as f64;
                        for (j, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = inv_std[r] / n * (n * dxhat[j] - s1 - xhat.row(r)[j] * s2);
                        }
                    }
                    acc(*x, d);
                }
            }
            Op::Im2col(x, width) => {
                let src = val(*x);
                acc(*x, array::col2im(g, src.rows(), src.cols(), *width));
            }
            Op::Sum(x) => acc(*x, DenseArray::full(val(*x).shape(), g.item())),
            Op::Mean(x) => {
                let n = val(*x).len() as f64;
                acc(*x, DenseArray::full(val(*x).shape(), g.item() / n));
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let n = targets.len() as f64;
                let mut d = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    d.row_mut(r)[t] -= 1.0;
                }
                acc(*logits, d.scale(g.item() / n));
            }
            Op::Custom(op, inputs) => {
                let ins: Vec<&DenseArray> = inputs.iter().map(|&v| val(v)).collect();
                for (v, d) in inputs.iter().zip(op.backward(&ins, &node.value, g)) {
                    if let Some(d) = d {
                        acc(*v, d);
                    }
                }
            }
        }
    }
}

const BRANCH_SEED: u64 = 0xcbf2_9ce4_8422_2325;

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(&DenseArray) -> f64, x: &DenseArray) -> DenseArray {
        let eps = 1e-6;
        let mut out = DenseArray::zeros(x.shape());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += eps;
            let mut minus = x.clone();
            minus.data_mut()[i] -= eps;
            out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        out
    }

    fn check(build: impl Fn(&mut Graph, Var) -> Var, x: DenseArray) {
        let f = |x: &DenseArray| {
            let mut g = Graph::new();
            let v = g.variable(x.clone());
            let out = build(&mut g, v);
            g.value(out).item()
        };
        let mut g = Graph::new();
        let v = g.variable(x.clone());
        let out = build(&mut g, v);
        let grads = g.backward(out);
        let analytic = grads.get(v).unwrap();
        let numeric = numeric_grad(f, &x);
        assert!(
            analytic.max_abs_diff(&numeric) < 1e-6,
            "analytic {analytic:?}\nnumeric {numeric:?}"
        );
    }

    fn sample(rows: usize, cols: usize) -> DenseArray {
        DenseArray::new(
            vec![rows, cols],
            (0..rows * cols).map(|i| ((i as f64) * 1.37).sin() * 0.9 + 0.05).collect(),
        )
        .unwrap()
    }

    /// Reduces to a scalar through a fixed random-ish weighting so every
    /// output element contributes a distinct amount.
    fn weigh(g: &mut Graph, v: Var) -> Var {
        let shape = g.shape(v).to_vec();
        let n: usize = shape.iter().product();
        let w = DenseArray::new(shape, (0..n).map(|i| ((i as f64) * 0.61).cos()).collect()).unwrap();
        let w = g.constant(w);
        let p = g.mul(v, w).unwrap();
        g.sum(p)
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        check(|g, x| { let y = g.gelu(x); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.sigmoid(x); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.exp(x); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.relu(x); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.abs(x); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.mul(x, x).unwrap(); g.mean(y) }, sample(2, 3));
        check(|g, x| { let y = g.add_scalar(x, 2.0); let y = g.scale(y, -3.0); weigh(g, y) }, sample(2, 3));
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        check(|g, x| { let y = g.transpose(x); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.slice_rows(x, 1, 2).unwrap(); weigh(g, y) }, sample(4, 3));
        check(|g, x| { let y = g.slice_cols(x, 1, 2).unwrap(); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.gather_rows(x, &[2, 0, 2]).unwrap(); weigh(g, y) }, sample(3, 2));
        check(|g, x| { let y = g.concat_rows(&[x, x]).unwrap(); weigh(g, y) }, sample(2, 3));
        check(|g, x| { let y = g.concat_cols(&[x, x]).unwrap(); weigh(g, y) }, sample(2, 3));
        check(|g, x| { let y = g.im2col(x, 3).unwrap(); weigh(g, y) }, sample(4, 2));
        check(|g, x| { let y = g.reshape(x, &[2, 6]).unwrap(); weigh(g, y) }, sample(3, 4));
    }

    #[test]
    fn matrix_ops_match_finite_differences() {
        let w = sample(4, 2);
        check(move |g, x| { let w = g.constant(w.clone()); let y = g.matmul(x, w).unwrap(); weigh(g, y) }, sample(3, 4));
        let m = sample(2, 3);
        check(move |g, x| { let m = g.constant(m.clone()); let y = g.matmul(m, x).unwrap(); weigh(g, y) }, sample(3, 4));
        check(|g, x| { let y = g.softmax_rows(x).unwrap(); weigh(g, y) }, sample(3, 4));
        check(|g, x| g.cross_entropy(x, &[0, 3, 1]).unwrap(), sample(3, 4));
        let b = DenseArray::new(vec![4], vec![0.1, -0.2, 0.3, 0.0]).unwrap();
        check(move |g, x| { let b = g.variable(b.clone()); let y = g.add_bias(x, b).unwrap(); let y = g.mul(y, y).unwrap(); g.sum(y) }, sample(3, 4));
    }

    #[test]
    fn layer_norm_matches_finite_differences() {
        let gamma = DenseArray::new(vec![4], vec![1.0, 0.5, -0.3, 2.0]).unwrap();
        let beta = DenseArray::new(vec![4], vec![0.0, 0.1, 0.2, -0.1]).unwrap();
        let (g1, b1) = (gamma.clone(), beta.clone());
        check(
            move |g, x| {
                let ga = g.constant(g1.clone());
                let be = g.constant(b1.clone());
                let y = g.layer_norm(x, ga, be).unwrap();
                weigh(g, y)
            },
            sample(3, 4),
        );
        let x = sample(3, 4);
        check(
            move |g, ga| {
                let xv = g.constant(x.clone());
                let be = g.constant(beta.clone());
                let y = g.layer_norm(xv, ga, be).unwrap();
                weigh(g, y)
            },
            gamma,
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(sample(2, 2));
        let v = g.variable(sample(2, 2));
        let y = g.mul(c, v).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(v).unwrap(), g.value(c));
    }

    #[test]
    fn reused_nodes_accumulate() {
        let mut g = Graph::new();
        let v = g.variable(DenseArray::scalar(3.0));
        let y = g.mul(v, v).unwrap();
        let grads = g.backward(y);
        assert_eq!(grads.get(v).unwrap().item(), 6.0);
    }
}
