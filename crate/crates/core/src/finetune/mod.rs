//! Backbone classifiers and their two-stage fine-tuning loop.
//!
//! A classifier is a body (feature extractor, [`Group::Body`]) plus a fresh
//! linear head ([`Group::Head`]). Stage 1 trains the head with the body
//! frozen; stage 2 trains everything, the body at a tenth of the head rate,
//! until validation stops improving.
//!
//! [`Group::Body`]: ctaug_autograd::Group::Body
//! [`Group::Head`]: ctaug_autograd::Group::Head

pub mod backbone;
mod classifier;
mod provider;
mod spec;
mod train;

pub use classifier::{build_classifier, softmax_pairs, Classifier, ClassifierCheckpoint, CLASSIFIER_HEADER};
pub use provider::{export_body_weights, NoPretrained, WeightDir, WeightProvider, WEIGHTS_HEADER};
pub use spec::{BackboneId, BackboneSpec, EarlyStopMetric, TrainConfig, Variant};
pub use train::{
    early_stop_check, prepared_eval_set, two_stage_finetune, EpochRecord, ImageSource, LearningCurve, SampleSource,
    StopDecision, TrainRun,
};

#[derive(Debug, thiserror::Error)]
pub enum FinetuneError {
    #[error("unknown backbone `{0}`")]
    UnknownBackbone(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("input size {input_dim} rejected: {reason}")]
    InputDim { input_dim: usize, reason: String },
    #[error("no pretrained weights for {0}")]
    MissingWeights(String),
    #[error("training set is empty")]
    EmptyTraining,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("data: {0}")]
    Data(String),
}

impl From<ctaug_autograd::Error> for FinetuneError {
    fn from(e: ctaug_autograd::Error) -> Self {
        FinetuneError::Checkpoint(e.to_string())
    }
}
