use serde::{Deserialize, Serialize};

use super::answer::{Answer, ParsedAnswer};

/// Binary-classification tallies. Unparseable answers count as wrong and are also tallied separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(default)]
    pub unparseable: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self {
            tp,
            tn,
            fp,
            fn_,
            unparseable: 0,
        }
    }

    pub fn record(&mut self, gold: Answer, predicted: ParsedAnswer) {
        if predicted == ParsedAnswer::Unparseable {
            self.unparseable += 1;
        }
        match (gold, predicted.matches(gold)) {
            (Answer::Yes, true) => self.tp += 1,
            (Answer::Yes, false) => self.fn_ += 1,
            (Answer::No, true) => self.tn += 1,
            (Answer::No, false) => self.fp += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.unparseable += other.unparseable;
    }
}

/// Percentages; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// `2ab/(a+b)`; zero when both are zero.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn confusion_metrics(c: &ConfusionCounts) -> ConfusionMetrics {
    let precision = percent(c.tp, c.tp + c.fp);
    let recall = percent(c.tp, c.tp + c.fn_);
    ConfusionMetrics {
        accuracy: percent(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1: precision.zip(recall).map(|(p, r)| harmonic_mean(p, r)),
    }
}
