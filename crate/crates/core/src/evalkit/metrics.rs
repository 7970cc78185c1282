use std::fmt::Debug;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data_catalog::Label;

/// Number type a metric can be evaluated in: floats, or exact rationals.
pub trait MetricValue: Num + Clone + PartialOrd + FromPrimitive + Debug {}

impl<T: Num + Clone + PartialOrd + FromPrimitive + Debug> MetricValue for T {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Tallies a 2x2 table treating `positive` as the positive class.
pub fn confusion(
    preds: &[Label],
    truths: &[Label],
    positive: Label,
) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truths: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        match (p == positive, t == positive) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Threshold-derived metrics; `None` marks a zero denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMetrics<T> {
    pub accuracy: Option<T>,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
}

fn ratio<T: MetricValue>(num: u64, den: u64) -> Option<T> {
    (den > 0).then(|| T::from_u64(num).expect("count fits") / T::from_u64(den).expect("count fits"))
}

pub fn metrics_from_confusion<T: MetricValue>(cm: &ConfusionMatrix) -> LabelMetrics<T> {
    let accuracy = ratio(cm.tp + cm.tn, cm.total());
    let precision: Option<T> = ratio(cm.tp, cm.tp + cm.fp);
    let recall: Option<T> = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (&precision, &recall) {
        (Some(p), Some(r)) if !(p.clone() + r.clone()).is_zero() => {
            let two = T::one() + T::one();
            Some(two * p.clone() * r.clone() / (p.clone() + r.clone()))
        }
        _ => None,
    };
    LabelMetrics {
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// The five reported metrics for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub accuracy: Option<T>,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
    pub auc: Option<T>,
}

impl<T: Clone> MetricSet<T> {
    pub const NAMES: [&'static str; 5] = ["accuracy", "precision", "recall", "f1", "auc"];

    pub fn from_parts(label: LabelMetrics<T>, auc: Option<T>) -> Self {
        Self {
            accuracy: label.accuracy,
            precision: label.precision,
            recall: label.recall,
            f1: label.f1,
            auc,
        }
    }

    /// Values in [`Self::NAMES`] order.
    pub fn values(&self) -> [Option<T>; 5] {
        [
            self.accuracy.clone(),
            self.precision.clone(),
            self.recall.clone(),
            self.f1.clone(),
            self.auc.clone(),
        ]
    }
}
