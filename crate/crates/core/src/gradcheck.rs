//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{NumericError, Result};
use crate::params::ParamTree;

/// One checked scalar parameter.
#[derive(Debug, Clone, Serialize)]
pub struct GradSample {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub eps: f64,
    pub max_rel_error: f64,
    pub samples: Vec<GradSample>,
    /// Draws whose `±eps` probes landed on different sides of a kink; the
    /// central difference is meaningless there, so each was replaced by a
    /// fresh draw from the same group.
    pub skipped: Vec<GradSample>,
}

impl GradReport {
    pub fn worst(&self) -> Option<&GradSample> {
        self.samples
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks `samples` randomly chosen trainable scalars.
///
/// `loss_fn` returns the loss together with its analytic gradient tree.
pub fn gradcheck<F>(loss_fn: F, params: &ParamTree, eps: f64, samples: usize, seed: u64) -> Result<GradReport>
where
    F: Fn(&ParamTree) -> Result<(f64, ParamTree)>,
{
    gradcheck_stratified(loss_fn, params, eps, samples, seed, &[""])
}

/// Like [`gradcheck`], but draws samples round-robin from the parameter
/// groups named by `prefixes`, so every group is covered.
pub fn gradcheck_stratified<F>(
    loss_fn: F,
    params: &ParamTree,
    eps: f64,
    samples: usize,
    seed: u64,
    prefixes: &[&str],
) -> Result<GradReport>
where
    F: Fn(&ParamTree) -> Result<(f64, ParamTree)>,
{
    gradcheck_traced(|p| loss_fn(p).map(|(l, g)| (l, g, 0)), params, eps, samples, seed, prefixes)
}

/// Stratified check for piecewise-smooth losses. `loss_fn` also returns the
/// graph's [`branch_signature`](crate::Graph::branch_signature); a draw is
/// kept only if the signature agrees at `θ`, `θ + eps` and `θ − eps`.
pub fn gradcheck_traced<F>(
    loss_fn: F,
    params: &ParamTree,
    eps: f64,
    samples: usize,
    seed: u64,
    prefixes: &[&str],
) -> Result<GradReport>
where
    F: Fn(&ParamTree) -> Result<(f64, ParamTree, u64)>,
{
    let groups: Vec<Vec<&str>> = prefixes
        .iter()
        .map(|p| {
            params
                .iter()
                .filter(|(n, e)| e.trainable && n.starts_with(p) && !e.value.is_empty())
                .map(|(n, _)| n)
                .collect::<Vec<_>>()
        })
        .collect();
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(NumericError::Config(format!(
            "no trainable parameters under `{}`",
            prefixes[i]
        )));
    }

    let (base_loss, analytic, base_branches) = loss_fn(params)?;
    if !base_loss.is_finite() {
        return Err(NumericError::NonFinite {
            context: "loss at unperturbed parameters".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(samples);
    let mut skipped = Vec::new();
    while out.len() < samples {
        if skipped.len() > samples {
            return Err(NumericError::Config(format!(
                "{} of {} draws straddled a kink; eps {eps} is too large for this loss",
                skipped.len(),
                skipped.len() + out.len()
            )));
        }
        let group = &groups[out.len() % groups.len()];
        let name = group[rng.random_range(0..group.len())];
        let len = params.get(name).expect("listed").len();
        let index = rng.random_range(0..len);
        let original = params.get(name).expect("listed").data()[index];

        let eval = |probe: &mut ParamTree, value: f64| -> Result<(f64, u64)> {
            probe.get_mut(name).expect("listed").data_mut()[index] = value;
            let (loss, _, branches) = loss_fn(probe)?;
            if !loss.is_finite() {
                return Err(NumericError::NonFinite {
                    context: format!("loss while perturbing {name}[{index}]"),
                });
            }
            Ok((loss, branches))
        };
        let (plus, b_plus) = eval(&mut probe, original + eps)?;
        let (minus, b_minus) = eval(&mut probe, original - eps)?;
        probe.get_mut(name).expect("listed").data_mut()[index] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.get(name).expect("gradient tree has every name").data()[index];
        let sample = GradSample {
            name: name.to_string(),
            index,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        };
        if b_plus == base_branches && b_minus == base_branches {
            out.push(sample);
        } else {
            skipped.push(sample);
        }
    }
    let max_rel_error = out.iter().map(|s| s.rel_error).fold(0.0, f64::max);
    Ok(GradReport {
        eps,
        max_rel_error,
        samples: out,
        skipped,
    })
}
