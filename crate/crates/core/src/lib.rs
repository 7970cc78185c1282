//! Patient-disjoint data handling, preprocessing, CycleGAN augmentation,
//! two-stage fine-tuning and evaluation for binary CT slice classification.
//!
//! Numerics are generic over [`Scalar`]; the aliases below fix `f32`, the
//! training precision.

pub mod cyclegan;
pub mod data_catalog;
pub mod evalkit;
pub mod finetune;
pub mod preprocess;
pub mod synthetic;

pub use ctaug_autograd as autograd;
pub use ctaug_autograd::Scalar;

pub type Image32 = preprocess::Image<f32>;
pub type Image64 = preprocess::Image<f64>;
pub type CycleGan32 = cyclegan::CycleGanModel<f32>;
pub type Classifier32 = finetune::Classifier<f32>;
