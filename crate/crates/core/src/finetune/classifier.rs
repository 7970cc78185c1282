use std::path::Path;

use ctaug_autograd::nn::Linear;
use ctaug_autograd::ops::softmax_rows;
use ctaug_autograd::{Archive, Builder, Ctx, Graph, Group, Init, ParamStore, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::Body;
use super::provider::load_body_weights;
use super::{BackboneSpec, FinetuneError, WeightProvider};
use crate::evalkit::ProbabilityModel;
use crate::preprocess::Image;

pub const CLASSIFIER_HEADER: &str = "CLF-CKPT-v1";

/// Backbone body plus a linear head over pooled features.
#[derive(Clone, Debug)]
pub struct Classifier<T: Scalar> {
    pub spec: BackboneSpec,
    pub n_classes: usize,
    pub store: ParamStore<T>,
    body: Body,
    head: Linear,
}

/// Training metadata stored alongside classifier parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    pub best_epoch: Option<usize>,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    spec: BackboneSpec,
    n_classes: usize,
    #[serde(flatten)]
    info: ClassifierCheckpoint,
}

/// Builds `spec`'s body and a fresh `n_classes`-way head. With
/// `spec.pretrained` the body takes the provider's weights, which must exist;
/// otherwise the body is initialized from `seed`. The head is always seeded.
pub fn build_classifier<T: Scalar>(
    spec: &BackboneSpec,
    n_classes: usize,
    provider: &dyn WeightProvider,
    seed: u64,
) -> Result<Classifier<T>, FinetuneError> {
    let mut model = Classifier::assemble(spec, n_classes, seed)?;
    if spec.pretrained {
        let archive = provider.body_weights(spec)?;
        load_body_weights(&mut model.store, &archive)?;
    }
    Ok(model)
}

/// Softmax over each row of `[n, 2]` logits.
pub fn softmax_pairs<T: Scalar>(logits: &[T]) -> Vec<[T; 2]> {
    softmax_rows(logits, 2).chunks(2).map(|p| [p[0], p[1]]).collect()
}

impl<T: Scalar> Classifier<T> {
    fn assemble(spec: &BackboneSpec, n_classes: usize, seed: u64) -> Result<Self, FinetuneError> {
        if n_classes < 2 {
            return Err(FinetuneError::Config(format!("n_classes must be at least 2, got {n_classes}")));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(&mut store, &mut rng);
        let body = Body::new(&mut b, spec)?;
        let mut b = b.with_group(Group::Head);
        let head = b.scoped("head", |b| {
            let weight = b.param("weight", vec![n_classes, spec.feature_dim()], spec.feature_dim(), Init::Normal(0.01));
            let bias = b.param("bias", vec![n_classes], 1, Init::Zeros);
            Linear {
                weight,
                bias: Some(bias),
            }
        });
        Ok(Self {
            spec: spec.clone(),
            n_classes,
            store,
            body,
            head,
        })
    }

    /// Pooled body features for `x` of shape `[n, 3, d, d]`.
    pub fn features<'g>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        self.body.features(cx, x)
    }

    pub fn head_logits<'g>(&self, cx: &Ctx<'g, '_, T>, features: Var<'g, T>) -> Var<'g, T> {
        self.head.forward(cx, features)
    }

    pub fn logits<'g>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        self.head_logits(cx, self.features(cx, x))
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<(), FinetuneError> {
        let d = self.spec.input_dim;
        if x.shape().len() != 4 || x.shape()[1..] != [3, d, d] || x.shape()[0] == 0 {
            return Err(FinetuneError::Shape(format!(
                "expected [n, 3, {d}, {d}] input, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Class probabilities for a batch; pure function of the weights.
    pub fn predict_probs(&self, x: &Tensor<T>) -> Result<Vec<[T; 2]>, FinetuneError> {
        if self.n_classes != 2 {
            return Err(FinetuneError::Shape(format!("head emits {} logits, not 2", self.n_classes)));
        }
        self.check_input(x)?;
        let graph = Graph::new();
        let cx = Ctx::new(&graph, &self.store);
        let logits = self.logits(&cx, graph.input(x.clone()));
        Ok(softmax_pairs(logits.value().data()))
    }

    pub fn save(&self, path: &Path, info: &ClassifierCheckpoint) -> Result<(), FinetuneError> {
        let mut ar = Archive::new(CLASSIFIER_HEADER);
        ar.put_store("params", &self.store);
        ar.meta = serde_json::to_value(CheckpointMeta {
            spec: self.spec.clone(),
            n_classes: self.n_classes,
            info: info.clone(),
        })
        .map_err(|e| FinetuneError::Checkpoint(e.to_string()))?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| FinetuneError::Checkpoint(format!("{}: {e}", dir.display())))?;
        }
        ar.save(path)
            .map_err(|e| FinetuneError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(Self, ClassifierCheckpoint), FinetuneError> {
        let ctx = |e: ctaug_autograd::Error| FinetuneError::Checkpoint(format!("{}: {e}", path.display()));
        let ar = Archive::load(path, CLASSIFIER_HEADER).map_err(ctx)?;
        let meta: CheckpointMeta = serde_json::from_value(ar.meta.clone())
            .map_err(|e| FinetuneError::Checkpoint(format!("{}: {e}", path.display())))?;
        let mut model = Self::assemble(&meta.spec, meta.n_classes, 0)?;
        ar.load_store("params", &mut model.store).map_err(ctx)?;
        Ok((model, meta.info))
    }
}

impl<T: Scalar> ProbabilityModel<T> for Classifier<T> {
    fn class_probs(&self, images: &[&Image<T>]) -> Result<Vec<[T; 2]>, String> {
        let batch = Image::batch(images).map_err(|e| e.to_string())?;
        self.predict_probs(&batch).map_err(|e| e.to_string())
    }
}
