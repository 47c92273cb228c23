//! Linear-chain CRF over BIO tags. `trans[a][b]` scores tag `a` followed by
//! tag `b`; `start`/`end` score the first and last tags.

use mmie_core::{CustomOp, DenseArray, Graph, Var};

use crate::error::{ModelError, Result};

/// Borrowed CRF potentials.
#[derive(Debug, Clone, Copy)]
pub struct Potentials<'a> {
    /// `[n, T]`
    pub emissions: &'a DenseArray,
    /// `[T, T]`
    pub trans: &'a DenseArray,
    pub start: &'a [f64],
    pub end: &'a [f64],
}

impl Potentials<'_> {
    fn tags(&self) -> usize {
        self.start.len()
    }

    fn len(&self) -> usize {
        self.emissions.rows()
    }

    fn check(&self) -> Result<()> {
        let t = self.tags();
        let ok = self.emissions.shape().len() == 2
            && self.emissions.cols() == t
            && self.trans.shape() == [t, t]
            && self.end.len() == t
            && t > 0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config(format!(
                "CRF shapes disagree: emissions {:?}, trans {:?}, start {}, end {}",
                self.emissions.shape(),
                self.trans.shape(),
                self.start.len(),
                self.end.len()
            )))
        }
    }

    pub fn path_score(&self, path: &[usize]) -> f64 {
        let Some((&first, _)) = path.split_first() else { return 0.0 };
        let mut s = self.start[first] + self.emissions.at(0, first);
        for i in 1..path.len() {
            s += self.trans.at(path[i - 1], path[i]) + self.emissions.at(i, path[i]);
        }
        s + self.end[*path.last().expect("non-empty")]
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward (`alpha`) and backward (`beta`) log-messages, `[n][T]` each.
fn messages(p: &Potentials) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n, t) = (p.len(), p.tags());
    let mut alpha = vec![vec![0.0; t]; n];
    for b in 0..t {
        alpha[0][b] = p.start[b] + p.emissions.at(0, b);
    }
    for i in 1..n {
        for b in 0..t {
            let prev = &alpha[i - 1];
            alpha[i][b] = log_sum_exp((0..t).map(|a| prev[a] + p.trans.at(a, b))) + p.emissions.at(i, b);
        }
    }
    let mut beta = vec![vec![0.0; t]; n];
    beta[n - 1].copy_from_slice(p.end);
    for i in (0..n - 1).rev() {
        for a in 0..t {
            let next = &beta[i + 1];
            beta[i][a] = log_sum_exp((0..t).map(|b| p.trans.at(a, b) + p.emissions.at(i + 1, b) + next[b]));
        }
    }
    (alpha, beta)
}

/// `log Z`; zero for an empty sequence.
pub fn log_partition(p: &Potentials) -> Result<f64> {
    p.check()?;
    if p.len() == 0 {
        return Ok(0.0);
    }
    let (alpha, _) = messages(p);
    let last = &alpha[p.len() - 1];
    Ok(log_sum_exp((0..p.tags()).map(|b| last[b] + p.end[b])))
}

/// Best path; every arg-max keeps the lowest tag index among ties.
pub fn viterbi(p: &Potentials) -> Result<Vec<usize>> {
    p.check()?;
    let (n, t) = (p.len(), p.tags());
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut score: Vec<f64> = (0..t).map(|b| p.start[b] + p.emissions.at(0, b)).collect();
    let mut back = vec![vec![0usize; t]; n];
    for i in 1..n {
        let mut next = vec![0.0; t];
        for b in 0..t {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for (a, &s) in score.iter().enumerate() {
                let v = s + p.trans.at(a, b);
                if v > best {
                    (best, arg) = (v, a);
                }
            }
            next[b] = best + p.emissions.at(i, b);
            back[i][b] = arg;
        }
        score = next;
    }
    let (mut best, mut tag) = (f64::NEG_INFINITY, 0);
    for (b, &s) in score.iter().enumerate() {
        if s + p.end[b] > best {
            (best, tag) = (s + p.end[b], b);
        }
    }
    let mut path = vec![tag; n];
    for i in (1..n).rev() {
        tag = back[i][tag];
        path[i - 1] = tag;
    }
    Ok(path)
}

/// Tape op for the sequence NLL `log Z − score(gold)`. The forward pass
/// stores the posterior marginals the backward rule needs.
struct CrfNll {
    gold: Vec<usize>,
    /// `[n, T]` unary marginals
    unary: DenseArray,
    /// `[T, T]` expected transition counts
    pairwise: DenseArray,
}

impl CustomOp for CrfNll {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, _inputs: &[&DenseArray], _output: &DenseArray, grad: &DenseArray) -> Vec<Option<DenseArray>> {
        let g = grad.item();
        let (n, t) = (self.unary.rows(), self.unary.cols());
        let mut d_emit = self.unary.clone();
        let mut d_trans = self.pairwise.clone();
        let mut d_start = DenseArray::new(vec![t], self.unary.row(0).to_vec()).expect("shape");
        let mut d_end = DenseArray::new(vec![t], self.unary.row(n - 1).to_vec()).expect("shape");
        for (i, &y) in self.gold.iter().enumerate() {
            d_emit.row_mut(i)[y] -= 1.0;
            if i > 0 {
                d_trans.row_mut(self.gold[i - 1])[y] -= 1.0;
            }
        }
        d_start.data_mut()[self.gold[0]] -= 1.0;
        d_end.data_mut()[self.gold[n - 1]] -= 1.0;
        [d_emit, d_trans, d_start, d_end]
            .into_iter()
            .map(|d| Some(d.scale(g)))
            .collect()
    }
}

/// Scalar NLL node over `emissions [n, T]`, `trans [T, T]`, `start [T]`,
/// `end [T]`.
pub fn nll(g: &mut Graph, emissions: Var, trans: Var, start: Var, end: Var, gold: &[usize]) -> Result<Var> {
    let p = Potentials {
        emissions: g.value(emissions),
        trans: g.value(trans),
        start: g.value(start).data(),
        end: g.value(end).data(),
    };
    p.check()?;
    let (n, t) = (p.len(), p.tags());
    if n == 0 || gold.len() != n || gold.iter().any(|&y| y >= t) {
        return Err(ModelError::Config(format!(
            "gold tags ({}) do not fit {n} positions of {t} tags",
            gold.len()
        )));
    }
    let (alpha, beta) = messages(&p);
    let log_z = log_sum_exp((0..t).map(|b| alpha[n - 1][b] + p.end[b]));
    let mut unary = DenseArray::zeros(&[n, t]);
    for i in 0..n {
        for b in 0..t {
            unary.row_mut(i)[b] = (alpha[i][b] + beta[i][b] - log_z).exp();
        }
    }
    let mut pairwise = DenseArray::zeros(&[t, t]);
    for i in 1..n {
        for a in 0..t {
            for b in 0..t {
                let lp = alpha[i - 1][a] + p.trans.at(a, b) + p.emissions.at(i, b) + beta[i][b] - log_z;
                pairwise.row_mut(a)[b] += lp.exp();
            }
        }
    }
    let value = log_z - p.path_score(gold);
    let op = CrfNll { gold: gold.to_vec(), unary, pairwise };
    Ok(g.custom(Box::new(op), &[emissions, trans, start, end], DenseArray::scalar(value)))
}
