//! One-axis experiment sweeps, each point averaged over several seeds.

use mmie_metrics::EvalReport;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{PathConfig, RunConfig, SweepAxis};
use crate::error::{Result, TrainError};
use crate::run::execute;

/// Column order of [`SweepPoint::mean`] and [`SweepPoint::variance`].
pub const METRICS: [&str; 5] = ["ent", "cha", "rel", "gro", "avg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: Vec<SeedRun>,
    /// Per-metric mean over seeds, in [`METRICS`] order.
    pub mean: [f64; 5],
    /// Per-metric sample variance over seeds (0 for a single seed).
    pub variance: [f64; 5],
}

/// Plot-ready `(value, mean)` series for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub metric: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
    pub series: Vec<Series>,
}

impl SweepReport {
    pub fn point(&self, value: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.value == value)
    }
}

/// `base` with the axis set to `value`.
pub fn apply_axis(base: &RunConfig, axis: SweepAxis, value: f64) -> Result<RunConfig> {
    let mut run = base.clone();
    let flag = |v: f64| match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(TrainError::Config(format!("{} takes 0 or 1, got {v}", axis.as_str()))),
    };
    match axis {
        SweepAxis::PromptLen => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(TrainError::Config(format!("prompt_len must be a positive integer, got {value}")));
            }
            run.mmcm.prompt_len = value as usize;
        }
        SweepAxis::MissingRatio => {
            if !(0.0..=1.0).contains(&value) {
                return Err(TrainError::Config(format!("missing_ratio must lie in [0, 1], got {value}")));
            }
            // missing samples split evenly between the two modalities
            run.data.regime_fractions = Some((1.0 - value, value / 2.0, value / 2.0));
        }
        SweepAxis::MmcmOnOff => run.mmcm.enabled = flag(value)?,
        SweepAxis::DffmOnOff => run.dffm.enabled = flag(value)?,
    }
    run.validate()?;
    Ok(run)
}

/// The configuration of one (value, seed) run: run and generator seeds are
/// both set to `seed` and no files are written.
pub fn point_config(base: &RunConfig, axis: SweepAxis, value: f64, seed: u64) -> Result<RunConfig> {
    let mut run = apply_axis(base, axis, value)?;
    run.seed = seed;
    run.gen.seed = seed;
    run.paths = PathConfig {
        corpus: base.paths.corpus.clone(),
        eval_corpus: base.paths.eval_corpus.clone(),
        ..PathConfig::default()
    };
    Ok(run)
}

fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn metrics(r: &EvalReport) -> [f64; 5] {
    let [e, c, rel, g] = r.f1s();
    [e, c, rel, g, r.avg]
}

/// Runs `base.sweep`: every value × `seeds` consecutive seeds from
/// `base.seed`. Runs are independent and may execute concurrently;
/// `on_run` sees each finished run (in completion order).
pub fn sweep(base: &RunConfig, on_run: impl Fn(f64, u64, &EvalReport) + Sync) -> Result<SweepReport> {
    base.validate()?;
    let axis = base.sweep.axis;
    let values = base.sweep.values.clone().unwrap_or_else(|| axis.default_values());
    if values.is_empty() {
        return Err(TrainError::Config("sweep has no values".into()));
    }
    let seeds: Vec<u64> = (0..base.sweep.seeds as u64).map(|k| base.seed.wrapping_add(k)).collect();
    let jobs: Vec<(f64, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    // fail fast on bad values before any training starts
    for &(v, s) in &jobs {
        point_config(base, axis, v, s)?;
    }
    let results: Vec<SeedRun> = jobs
        .par_iter()
        .map(|&(v, s)| {
            let out = execute(&point_config(base, axis, v, s)?, |_| {})?;
            on_run(v, s, &out.report.eval);
            Ok(SeedRun { seed: s, eval: out.report.eval })
        })
        .collect::<Result<_>>()?;
    let points: Vec<SweepPoint> = values
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(&value, runs)| {
            let per: Vec<[f64; 5]> = runs.iter().map(|r| metrics(&r.eval)).collect();
            let mut mean = [0.0; 5];
            let mut variance = [0.0; 5];
            for k in 0..5 {
                (mean[k], variance[k]) = stats(&per.iter().map(|m| m[k]).collect::<Vec<_>>());
            }
            SweepPoint { value, runs: runs.to_vec(), mean, variance }
        })
        .collect();
    let series = METRICS
        .iter()
        .enumerate()
        .map(|(k, m)| Series {
            metric: m.to_string(),
            x: points.iter().map(|p| p.value).collect(),
            y: points.iter().map(|p| p.mean[k]).collect(),
            variance: points.iter().map(|p| p.variance[k]).collect(),
        })
        .collect();
    Ok(SweepReport { axis, seeds, points, series })
}
