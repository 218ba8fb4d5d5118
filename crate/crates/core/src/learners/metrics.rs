use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (p, a) in pairs {
            c.record(p, a);
        }
        c
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// Percentages in `[0, 100]`. A zero denominator yields 0 and sets the
/// matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

impl Metrics {
    /// Value rounded to two decimals, as reported.
    pub fn rounded(v: f64) -> f64 {
        (v * 100.0).round() / 100.0
    }
}

pub fn compute_metrics(c: Confusion) -> Result<Metrics, LearnError> {
    let total = c.total();
    if total == 0 {
        return Err(LearnError::EmptyConfusion);
    }
    let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    let precision = pct(c.tp, c.tp + c.fp);
    let recall = pct(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        confusion: c,
        accuracy: pct(c.tp + c.tn, total),
        precision,
        recall,
        f1,
        precision_undefined: c.tp + c.fp == 0,
        recall_undefined: c.tp + c.fn_ == 0,
    })
}
