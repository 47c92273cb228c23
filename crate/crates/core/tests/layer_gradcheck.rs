//! Every differentiable layer against central finite differences.

use mmie_core::nn::{self, Initializer};
use mmie_core::{gradcheck, DenseArray, Graph, ParamTree, Result, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn input(rows: usize, cols: usize, seed: u64) -> DenseArray {
    let data = (0..rows * cols)
        .map(|i| ((i as f64 + 1.0) * (seed as f64 + 0.37)).sin())
        .collect();
    DenseArray::new(vec![rows, cols], data).unwrap()
}

fn params(seed: u64, init: impl FnOnce(&mut Initializer<ChaCha8Rng>)) -> ParamTree {
    let mut tree = ParamTree::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init(&mut Initializer::new(&mut tree, &mut rng));
    // nonzero biases so their gradients are exercised away from zero
    for (_, e) in tree.iter_mut() {
        for (i, v) in e.value.data_mut().iter_mut().enumerate() {
            if *v == 0.0 {
                *v = 0.05 * ((i as f64) * 0.9).cos();
            }
        }
    }
    tree
}

/// Loss = weighted sum of the layer output, so every output element matters.
fn check(tree: &ParamTree, layer: impl Fn(&mut Graph, Var) -> Result<Var>, x: DenseArray) {
    let loss_fn = |p: &ParamTree| {
        let mut g = Graph::with_params(p);
        let xv = g.constant(x.clone());
        let y = layer(&mut g, xv)?;
        let n = g.value(y).len();
        let w = DenseArray::new(
            g.shape(y).to_vec(),
            (0..n).map(|i| ((i as f64) * 0.77).cos()).collect(),
        )?;
        let w = g.constant(w);
        let prod = g.mul(y, w)?;
        let loss = g.sum(prod);
        let grads = g.backward(loss);
        Ok((g.value(loss).item(), g.param_grads(&grads)))
    };
    let report = gradcheck(loss_fn, tree, EPS, 50, 11).unwrap();
    assert!(
        report.max_rel_error < TOL,
        "max relative error {} at {:?}",
        report.max_rel_error,
        report.worst()
    );
}

#[test]
fn linear_layer() {
    let t = params(1, |i| i.linear("l", 5, 3).unwrap());
    check(&t, |g, x| nn::linear(g, "l", x), input(4, 5, 1));
}

#[test]
fn layer_norm() {
    let t = params(2, |i| i.layer_norm("ln", 6).unwrap());
    check(&t, |g, x| nn::layer_norm(g, "ln", x), input(3, 6, 2));
}

#[test]
fn feed_forward() {
    let t = params(3, |i| i.ffn("f", 4, 16).unwrap());
    check(&t, |g, x| nn::ffn(g, "f", x), input(3, 4, 3));
}

#[test]
fn attention() {
    let t = params(4, |i| i.attention("a", 8).unwrap());
    let kv = input(5, 8, 9);
    check(
        &t,
        move |g, q| {
            let kv = g.constant(kv.clone());
            nn::multi_head_attention(g, "a", q, kv, kv, 2)
        },
        input(3, 8, 4),
    );
}

#[test]
fn conv1d() {
    let t = params(5, |i| i.conv1d("c", 3, 4, 6).unwrap());
    check(&t, |g, x| nn::conv1d(g, "c", x, 3), input(7, 4, 5));
}

#[test]
fn cross_entropy_through_linear() {
    let t = params(6, |i| i.linear("l", 4, 5).unwrap());
    check(
        &t,
        |g, x| {
            let logits = nn::linear(g, "l", x)?;
            g.cross_entropy(logits, &[0, 4, 2])
        },
        input(3, 4, 6),
    );
}
