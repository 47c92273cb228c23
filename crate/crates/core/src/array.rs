//! Row-major dense `f64` arrays and the plain (non-differentiated) kernels
//! that the autodiff tape reuses for its forward pass.

use serde::{Deserialize, Serialize};

use crate::error::{NumericError, Result};

/// An n-dimensional array of `f64` stored in row-major order.
///
/// Most of the model works on rank-2 arrays; higher-rank feature grids such as
/// `[frames, patches, width]` are kept as rank-2 `[frames * patches, width]`
/// blocks and reshaped at the edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericError::Dimension {
                op: "new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut out = Self::zeros(&[n, n]);
        for i in 0..n {
            out.data[i * n + i] = 1.0;
        }
        out
    }

    /// Builds a `[rows.len(), width]` matrix. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Self {
            shape: vec![rows.len(), width],
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the trailing axis (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of every axis but the last.
    pub fn rows(&self) -> usize {
        if self.shape.is_empty() {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// The single element of a one-element array.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NumericError::Dimension {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Collapses to `[rows, cols]`.
    pub fn as_matrix(&self) -> Self {
        Self {
            shape: vec![self.rows(), self.cols()],
            data: self.data.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(NumericError::Dimension {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    /// Matrix product of two rank-2 arrays.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(NumericError::Dimension {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[0] != other.shape[0] {
            return Err(NumericError::Dimension {
                op: "t_matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (k, m, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let b_row = &other.data[p * n..(p + 1) * n];
            for i in 0..m {
                let a = self.data[p * m + i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[1] {
            return Err(NumericError::Dimension {
                op: "matmul_t",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[0]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data: out,
        }
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Self> {
        if axis >= self.shape.len() {
            return Err(NumericError::Config(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| self.data[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..n {
                    let e = (self.data[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[idx(j)] /= total;
                }
            }
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Sum over leading rows, giving a `[cols]` vector.
    pub fn col_sums(&self) -> Self {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for row in self.data.chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Self {
            shape: vec![c],
            data: out,
        }
    }
}

/// Window `[lo, hi)` of input rows averaged into output row `t` when pooling
/// `len` rows down (or up) to `target` rows.
pub fn pool_window(t: usize, len: usize, target: usize) -> (usize, usize) {
    let lo = t * len / target;
    let hi = ((t + 1) * len).div_ceil(target);
    (lo, hi)
}

/// The `[target, len]` averaging matrix realizing [`avg_pool_to`].
pub fn pool_matrix(len: usize, target: usize) -> DenseArray {
    let mut m = DenseArray::zeros(&[target, len]);
    for t in 0..target {
        let (lo, hi) = pool_window(t, len, target);
        let w = 1.0 / (hi - lo) as f64;
        for j in lo..hi {
            m.data[t * len + j] = w;
        }
    }
    m
}

/// Adaptive mean pooling along the row axis of an `[L, d]` array.
pub fn avg_pool_to(x: &DenseArray, target: usize) -> Result<DenseArray> {
    if x.rows() == 0 || target == 0 {
        return Err(NumericError::Config(format!(
            "avg_pool_to needs non-empty input and target (got {} -> {target})",
            x.rows()
        )));
    }
    pool_matrix(x.rows(), target).matmul(&x.as_matrix())
}

/// Unfolds `[L, d]` into `[L, width * d]` sliding windows with zero padding
/// of `(width - 1) / 2` rows on each side.
pub fn im2col(x: &DenseArray, width: usize) -> Result<DenseArray> {
    if width % 2 == 0 {
        return Err(NumericError::Config(format!("convolution width must be odd, got {width}")));
    }
    let (len, d) = (x.rows(), x.cols());
    let half = (width - 1) / 2;
    let mut out = DenseArray::zeros(&[len, width * d]);
    for t in 0..len {
        for k in 0..width {
            let src = t as isize + k as isize - half as isize;
            if src < 0 || src >= len as isize {
                continue;
            }
            let src = src as usize;
            out.data[t * width * d + k * d..t * width * d + (k + 1) * d].copy_from_slice(x.row(src));
        }
    }
    Ok(out)
}

/// Adjoint of [`im2col`]: folds window gradients back onto the sequence.
pub fn col2im(cols: &DenseArray, len: usize, d: usize, width: usize) -> DenseArray {
    let half = (width - 1) / 2;
    let mut out = DenseArray::zeros(&[len, d]);
    for t in 0..len {
        for k in 0..width {
            let src = t as isize + k as isize - half as isize;
            if src < 0 || src >= len as isize {
                continue;
            }
            let src = src as usize;
            let grad = &cols.data[t * width * d + k * d..t * width * d + (k + 1) * d];
            for (o, g) in out.data[src * d..(src + 1) * d].iter_mut().zip(grad) {
                *o += g;
            }
        }
    }
    out
}

/// Same-length 1-D convolution over the sequence axis.
///
/// `kernel` is `[width * d_in, d_out]`, with window offset `k` occupying rows
/// `k * d_in .. (k + 1) * d_in`; `bias` is `[d_out]`.
pub fn conv1d_seq(x: &DenseArray, kernel: &DenseArray, bias: &DenseArray, width: usize) -> Result<DenseArray> {
    let cols = im2col(x, width)?;
    let mut out = cols.matmul(kernel)?;
    add_row_bias(&mut out, bias)?;
    Ok(out)
}

pub(crate) fn add_row_bias(x: &mut DenseArray, bias: &DenseArray) -> Result<()> {
    let c = x.cols();
    if bias.len() != c {
        return Err(NumericError::Dimension {
            op: "add_bias",
            lhs: x.shape.clone(),
            rhs: bias.shape.clone(),
        });
    }
    for row in x.data.chunks_mut(c) {
        for (v, b) in row.iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    Ok(())
}
