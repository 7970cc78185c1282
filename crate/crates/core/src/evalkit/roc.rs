use num_traits::Float;

use super::EvalError;
use crate::data_catalog::Label;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint<T> {
    pub fpr: T,
    pub tpr: T,
    /// Scores `>= threshold` are called positive. The first point uses `+inf`.
    pub threshold: T,
    pub tp: usize,
    pub fp: usize,
}

/// Invariant: starts at (0, 0), ends at (1, 1), both rates non-decreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve<T> {
    pub points: Vec<RocPoint<T>>,
    pub positives: usize,
    pub negatives: usize,
}

impl<T: Float> RocCurve<T> {
    pub fn coords(&self) -> Vec<[T; 2]> {
        self.points.iter().map(|p| [p.fpr, p.tpr]).collect()
    }

    /// `fpr,tpr,threshold` rows with a header.
    pub fn to_csv(&self) -> String
    where
        T: std::fmt::Display,
    {
        let mut s = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        s
    }
}

/// One step per distinct score, in descending order.
pub fn roc_curve<T: Float>(
    scores: &[T],
    truths: &[Label],
    positive: Label,
) -> Result<RocCurve<T>, EvalError> {
    if scores.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            preds: scores.len(),
            truths: truths.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let positives = truths.iter().filter(|&&t| t == positive).count();
    let negatives = truths.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let rate = |k: usize, n: usize| T::from(k).unwrap() / T::from(n).unwrap();
    let mut points = vec![RocPoint {
        fpr: T::zero(),
        tpr: T::zero(),
        threshold: T::infinity(),
        tp: 0,
        fp: 0,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truths[order[i]] == positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: rate(fp, negatives),
            tpr: rate(tp, positives),
            threshold: s,
            tp,
            fp,
        });
    }
    Ok(RocCurve {
        points,
        positives,
        negatives,
    })
}

/// Trapezoidal area under the curve.
pub fn auc<T: Float>(curve: &RocCurve<T>) -> T {
    let half = T::from(0.5).unwrap();
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * half)
        .fold(T::zero(), |a, b| a + b)
}
