use serde::{Deserialize, Serialize};

/// Precision, recall and F1. Counting metrics carry their `tp`/`fp`/`fn`;
/// ratio-based ones (the coreference metrics) leave them unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp: Option<u64>,
    #[serde(default, rename = "fn", skip_serializing_if = "Option::is_none")]
    pub fn_: Option<u64>,
}

/// `num / den` with `0/0 = 0`.
pub fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
            tp: None,
            fp: None,
            fn_: None,
        }
    }

    pub fn from_counts(c: Counts) -> Self {
        let p = ratio(c.tp as f64, (c.tp + c.fp) as f64);
        let r = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
        Self {
            tp: Some(c.tp),
            fp: Some(c.fp),
            fn_: Some(c.fn_),
            ..Self::from_pr(p, r)
        }
    }

    /// Componentwise mean of P, R and F1 (counts dropped).
    pub fn mean(items: &[Prf]) -> Self {
        let n = items.len() as f64;
        let avg = |f: fn(&Prf) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            precision: avg(|p| p.precision),
            recall: avg(|p| p.recall),
            f1: avg(|p| p.f1),
            tp: None,
            fp: None,
            fn_: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    /// From the number of matches, predictions and gold items.
    pub fn matched(tp: usize, predicted: usize, gold: usize) -> Self {
        Self {
            tp: tp as u64,
            fp: (predicted - tp) as u64,
            fn_: (gold - tp) as u64,
        }
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Precision and recall as separately summable numerators and denominators,
/// so per-document contributions pool into corpus-level scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioPair {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl RatioPair {
    pub fn prf(&self) -> Prf {
        Prf::from_pr(ratio(self.p_num, self.p_den), ratio(self.r_num, self.r_den))
    }
}

impl std::ops::AddAssign for RatioPair {
    fn add_assign(&mut self, o: Self) {
        self.p_num += o.p_num;
        self.p_den += o.p_den;
        self.r_num += o.r_num;
        self.r_den += o.r_den;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_denominators() {
        let p = Prf::from_counts(Counts::default());
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = Prf::from_counts(Counts { tp: 0, fp: 3, fn_: 2 });
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn serialized_names() {
        let s = serde_json::to_string(&Prf::from_counts(Counts { tp: 1, fp: 0, fn_: 1 })).unwrap();
        assert!(s.contains(r#""fn":1"#) && s.contains(r#""tp":1"#), "{s}");
        let s = serde_json::to_string(&Prf::from_pr(0.5, 0.5)).unwrap();
        assert!(!s.contains("tp"), "{s}");
    }

    proptest! {
        #[test]
        fn prf_bounds(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let p = Prf::from_counts(Counts { tp, fp, fn_ });
            for v in [p.precision, p.recall, p.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if tp == 0 {
                prop_assert_eq!(p.f1, 0.0);
            }
            if p.precision + p.recall > 0.0 {
                let h = 2.0 * p.precision * p.recall / (p.precision + p.recall);
                prop_assert!((p.f1 - h).abs() < 1e-15);
            }
        }
    }
}
