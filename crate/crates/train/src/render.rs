//! Human-readable tables and plot-data CSV for evaluation and sweep reports.
//!
//! Evaluation CSV columns: `scope,task,precision,recall,f1`, where scope is
//! `overall` or a regime name and task is one of `ent`, `cha`, `cha.muc`,
//! `cha.b_cubed`, `cha.ceaf_e`, `rel`, `gro`, `avg` (`avg` carries only F1).
//!
//! Sweep CSV columns: `axis,value,metric,mean,variance`, one row per point
//! and metric (`ent`, `cha`, `rel`, `gro`, `avg`).

use std::fmt::Write;

use mmie_metrics::{EvalReport, Prf};

use crate::sweep::{SweepReport, METRICS};

pub const EVAL_CSV_HEADER: &str = "scope,task,precision,recall,f1";
pub const SWEEP_CSV_HEADER: &str = "axis,value,metric,mean,variance";

fn rows(r: &EvalReport) -> Vec<(&'static str, Option<Prf>, f64)> {
    vec![
        ("ent", Some(r.ent), r.ent.f1),
        ("cha", Some(r.cha.prf()), r.cha.f1),
        ("cha.muc", Some(r.cha.muc), r.cha.muc.f1),
        ("cha.b_cubed", Some(r.cha.b_cubed), r.cha.b_cubed.f1),
        ("cha.ceaf_e", Some(r.cha.ceaf_e), r.cha.ceaf_e.f1),
        ("rel", Some(r.rel), r.rel.f1),
        ("gro", Some(r.gro), r.gro.f1),
        ("avg", None, r.avg),
    ]
}

fn scopes(r: &EvalReport) -> Vec<(&str, &EvalReport)> {
    std::iter::once(("overall", r))
        .chain(r.regimes.iter().map(|(k, v)| (k.as_str(), v)))
        .collect()
}

pub fn eval_table(r: &EvalReport) -> String {
    let mut out = String::new();
    for (scope, rep) in scopes(r) {
        writeln!(out, "[{scope}]").unwrap();
        writeln!(out, "{:<12} {:>9} {:>9} {:>9}", "task", "precision", "recall", "f1").unwrap();
        for (task, prf, f1) in rows(rep) {
            match prf {
                Some(p) => writeln!(out, "{task:<12} {:>9.4} {:>9.4} {:>9.4}", p.precision, p.recall, f1),
                None => writeln!(out, "{task:<12} {:>9} {:>9} {:>9.4}", "", "", f1),
            }
            .unwrap();
        }
    }
    let errors: Vec<String> = r
        .errors
        .iter()
        .map(|(task, e)| {
            let cats: Vec<String> = e.categories.iter().map(|(k, c)| format!("{k} {}", c.count)).collect();
            format!("{task}: {}", cats.join(", "))
        })
        .collect();
    if !errors.is_empty() {
        writeln!(out, "errors").unwrap();
        for e in errors {
            writeln!(out, "  {e}").unwrap();
        }
    }
    out
}

pub fn eval_csv(r: &EvalReport) -> String {
    let mut out = format!("{EVAL_CSV_HEADER}\n");
    for (scope, rep) in scopes(r) {
        for (task, prf, f1) in rows(rep) {
            match prf {
                Some(p) => writeln!(out, "{scope},{task},{},{},{f1}", p.precision, p.recall),
                None => writeln!(out, "{scope},{task},,,{f1}"),
            }
            .unwrap();
        }
    }
    out
}

pub fn sweep_table(r: &SweepReport) -> String {
    let mut out = format!("sweep over {} ({} seeds: {:?})\n", r.axis.as_str(), r.seeds.len(), r.seeds);
    write!(out, "{:>8}", "value").unwrap();
    for m in METRICS {
        write!(out, " {:>18}", m).unwrap();
    }
    out.push('\n');
    for p in &r.points {
        write!(out, "{:>8}", p.value).unwrap();
        for k in 0..METRICS.len() {
            write!(out, " {:>18}", format!("{:.4} ({:.1e})", p.mean[k], p.variance[k])).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn sweep_csv(r: &SweepReport) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for p in &r.points {
        for (k, m) in METRICS.iter().enumerate() {
            writeln!(out, "{},{},{m},{},{}", r.axis.as_str(), p.value, p.mean[k], p.variance[k]).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmie_data::{generate, oracle, GenConfig, ModalityMask, Prediction};
    use mmie_metrics::evaluate;

    fn report() -> EvalReport {
        let cfg = GenConfig { docs: 4, ..GenConfig::default() };
        let mut corpus = generate(&cfg).unwrap();
        corpus.documents[0].modality_mask = ModalityMask::NoText;
        let preds: Vec<Prediction> = corpus.documents.iter().map(|d| oracle::predict(d, &cfg)).collect();
        let pairs: Vec<_> = corpus.documents.iter().zip(&preds).collect();
        evaluate(&pairs).unwrap()
    }

    #[test]
    fn csv_has_a_row_per_scope_and_task() {
        let csv = eval_csv(&report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], EVAL_CSV_HEADER);
        // overall + full + no_text, eight tasks each
        assert_eq!(lines.len(), 1 + 3 * 8);
        assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 5));
        assert!(lines.contains(&"overall,avg,,,1"));
        assert!(lines.contains(&"no_text,ent,1,1,1"));
    }

    #[test]
    fn table_lists_every_scope() {
        let t = eval_table(&report());
        for s in ["[overall]", "[full]", "[no_text]", "cha.ceaf_e", "errors"] {
            assert!(t.contains(s), "{s}");
        }
    }
}
