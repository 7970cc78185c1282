//! Confusion counts, the five reported metrics, ROC/AUC, t-interval
//! aggregation over repeated runs and report rendering.

mod aggregate;
mod metrics;
mod report;
mod roc;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use aggregate::{aggregate_runs, t_quantile, AggregateResult};
pub use metrics::{confusion, metrics_from_confusion, ConfusionMatrix, LabelMetrics, MetricSet, MetricValue};
pub use report::{
    aggregate_metric_sets, comparison_table, format_cell, AggregateEntry, EvalReport, CONFIDENCE,
    TABLE_COLUMNS,
};
pub use roc::{auc, roc_curve, RocCurve, RocPoint};

use crate::data_catalog::Label;
use crate::preprocess::Image;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions vs {truths} labels")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("ROC needs at least one positive and one negative sample")]
    SingleClass,
    #[error("score {0} is not finite")]
    NonFiniteScore(usize),
    #[error("confidence {0} must lie in (0, 1)")]
    Confidence(f64),
    #[error("model failed: {0}")]
    Model(String),
}

/// Class with the larger probability; ties go to the lower class index.
pub fn predicted_label<T: PartialOrd>(probs: &[T; 2]) -> Label {
    if probs[1] > probs[0] {
        Label::from_index(1).unwrap()
    } else {
        Label::from_index(0).unwrap()
    }
}

/// Everything derived from one run's test-set predictions.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub metrics: MetricSet<T>,
    pub confusion: ConfusionMatrix,
    pub roc: RocCurve<T>,
    /// Probability of `positive` per sample.
    pub scores: Vec<T>,
    pub truths: Vec<Label>,
    pub preds: Vec<Label>,
}

/// Label metrics at the 0.5 decision rule plus ROC/AUC over positive-class
/// probabilities. AUC is `None` when the truths hold a single class.
pub fn evaluate_predictions<T: Float + FromPrimitive + std::fmt::Debug>(
    probs: &[[T; 2]],
    truths: &[Label],
    positive: Label,
) -> Result<Evaluation<T>, EvalError> {
    let preds: Vec<Label> = probs.iter().map(predicted_label).collect();
    let cm = confusion(&preds, truths, positive)?;
    let scores: Vec<T> = probs.iter().map(|p| p[positive.index()]).collect();
    let (roc, area) = match roc_curve(&scores, truths, positive) {
        Ok(c) => {
            let a = auc(&c);
            (c, Some(a))
        }
        Err(EvalError::SingleClass) => (
            RocCurve {
                points: Vec::new(),
                positives: cm.tp as usize + cm.fn_ as usize,
                negatives: cm.tn as usize + cm.fp as usize,
            },
            None,
        ),
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        metrics: MetricSet::from_parts(metrics_from_confusion(&cm), area),
        confusion: cm,
        roc,
        scores,
        truths: truths.to_vec(),
        preds,
    })
}

/// A model producing `[p_normal, p_covid]` pairs for model-ready images.
pub trait ProbabilityModel<T> {
    fn class_probs(&self, images: &[&Image<T>]) -> Result<Vec<[T; 2]>, String>;
}

/// Scores `test` in batches of `batch_size` and evaluates the predictions.
pub fn evaluate_model<T, M>(
    model: &M,
    test: &[(Image<T>, Label)],
    positive: Label,
    batch_size: usize,
) -> Result<Evaluation<T>, EvalError>
where
    T: Float + FromPrimitive + std::fmt::Debug,
    M: ProbabilityModel<T> + ?Sized,
{
    if test.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut probs = Vec::with_capacity(test.len());
    for chunk in test.chunks(batch_size.max(1)) {
        let images: Vec<&Image<T>> = chunk.iter().map(|(img, _)| img).collect();
        let out = model.class_probs(&images).map_err(EvalError::Model)?;
        if out.len() != chunk.len() {
            return Err(EvalError::LengthMismatch {
                preds: out.len(),
                truths: chunk.len(),
            });
        }
        probs.extend(out);
    }
    let truths: Vec<Label> = test.iter().map(|(_, l)| *l).collect();
    evaluate_predictions(&probs, &truths, positive)
}
