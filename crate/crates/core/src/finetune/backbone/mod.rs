//! Convolutional and transformer feature extractors. Each maps
//! `[n, 3, d, d]` to pooled features `[n, feature_dim]`.
//!
//! Blocks carry no batch statistics: residual branches end in a
//! zero-initialized projection so every block starts as its shortcut.

mod densenet;
mod efficientnet;
mod resnet;
mod vit;

use ctaug_autograd::nn::Conv2d;
use ctaug_autograd::ops::conv_out_dim;
use ctaug_autograd::{Builder, Ctx, Init, Scalar, Var};
use rand::Rng;

pub use densenet::{DenseNet, DenseNetConfig};
pub use efficientnet::{EfficientNet, EfficientNetConfig, MbStage};
pub use resnet::{ResNet, ResNetConfig, StageConfig};
pub use vit::{Vit, VitConfig, PATCH};

use super::{BackboneId, BackboneSpec, FinetuneError, Variant};

/// Input convolution, optionally followed by 2x2 average pooling.
#[derive(Clone, Debug)]
pub struct Stem {
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool: bool,
}

impl Stem {
    /// 7x7 stride-2 conv then pooling: a factor 4 reduction.
    pub fn large(width: usize) -> Self {
        Self {
            width,
            kernel: 7,
            stride: 2,
            pool: true,
        }
    }

    /// 3x3 stride-2 conv.
    pub fn small(width: usize) -> Self {
        Self {
            width,
            kernel: 3,
            stride: 2,
            pool: false,
        }
    }

    pub fn conv<T: Scalar, R: Rng + ?Sized>(&self, b: &mut Builder<'_, T, R>) -> Conv2d {
        Conv2d::new(b, "stem", 3, self.width, self.kernel, self.stride, self.kernel / 2, true, Init::HeNormal)
    }

    pub fn output_side(&self, input: usize) -> usize {
        let d = conv_side(input, self.kernel, self.stride);
        if self.pool {
            d / 2
        } else {
            d
        }
    }
}

/// Output side of a "same"-padded conv.
pub fn conv_side(input: usize, k: usize, stride: usize) -> usize {
    conv_out_dim(input, k, stride, k / 2)
}

#[derive(Clone, Debug)]
pub enum BodyConfig {
    ResNet(ResNetConfig),
    DenseNet(DenseNetConfig),
    EfficientNet(EfficientNetConfig),
    Vit(VitConfig),
}

impl BodyConfig {
    pub fn for_backbone(id: BackboneId, variant: Variant) -> Self {
        let tiny = variant == Variant::Tiny;
        match id {
            BackboneId::Resnet50 => BodyConfig::ResNet(if tiny { ResNetConfig::tiny() } else { ResNetConfig::resnet50() }),
            BackboneId::Resnest50 => BodyConfig::ResNet(
                if tiny { ResNetConfig::tiny() } else { ResNetConfig::resnet50() }.with_split_attention(),
            ),
            BackboneId::Densenet121 => {
                BodyConfig::DenseNet(if tiny { DenseNetConfig::tiny() } else { DenseNetConfig::densenet121() })
            }
            BackboneId::EfficientnetB3 => {
                BodyConfig::EfficientNet(if tiny { EfficientNetConfig::tiny() } else { EfficientNetConfig::b3() })
            }
            BackboneId::Vit => BodyConfig::Vit(if tiny { VitConfig::tiny() } else { VitConfig::base() }),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            BodyConfig::ResNet(c) => c.feature_dim(),
            BodyConfig::DenseNet(c) => c.feature_dim(),
            BodyConfig::EfficientNet(c) => c.feature_dim(),
            BodyConfig::Vit(c) => c.feature_dim(),
        }
    }

    /// Rejects input sizes the architecture cannot consume.
    pub fn check_input(&self, input_dim: usize) -> Result<(), FinetuneError> {
        let reject = |why: String| Err(FinetuneError::InputDim { input_dim, reason: why });
        match self {
            BodyConfig::Vit(_) => {
                if input_dim < PATCH || !input_dim.is_multiple_of(PATCH) {
                    return reject(format!("must be a positive multiple of the {PATCH}-pixel patch size"));
                }
            }
            BodyConfig::DenseNet(c) => {
                // Every transition pool needs at least a 2x2 map.
                let side = c.stem.output_side(input_dim);
                let pools = c.blocks.len().saturating_sub(1) as u32;
                if side < 2usize.pow(pools).max(1) {
                    return reject("too small for the transition pools".into());
                }
            }
            BodyConfig::ResNet(c) => {
                if c.stem.pool && conv_side(input_dim, c.stem.kernel, c.stem.stride) < 2 || c.output_side(input_dim) < 1 {
                    return reject("too small for the stem".into());
                }
            }
            BodyConfig::EfficientNet(c) => {
                if c.output_side(input_dim) < 1 {
                    return reject("too small for the stem".into());
                }
            }
        }
        if input_dim < 8 {
            return reject("must be at least 8".into());
        }
        Ok(())
    }
}

pub fn feature_dim(id: BackboneId, variant: Variant) -> usize {
    BodyConfig::for_backbone(id, variant).feature_dim()
}

#[derive(Clone, Debug)]
pub enum Body {
    ResNet(ResNet),
    DenseNet(DenseNet),
    EfficientNet(EfficientNet),
    Vit(Vit),
}

impl Body {
    /// Builds the body's parameters into `b`; the input size is validated
    /// before anything is allocated.
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, spec: &BackboneSpec) -> Result<Self, FinetuneError> {
        let cfg = BodyConfig::for_backbone(spec.id, spec.variant);
        cfg.check_input(spec.input_dim)?;
        Ok(b.scoped("body", |b| match &cfg {
            BodyConfig::ResNet(c) => Body::ResNet(ResNet::new(b, c)),
            BodyConfig::DenseNet(c) => Body::DenseNet(DenseNet::new(b, c)),
            BodyConfig::EfficientNet(c) => Body::EfficientNet(EfficientNet::new(b, c)),
            BodyConfig::Vit(c) => Body::Vit(Vit::new(b, c, spec.input_dim)),
        }))
    }

    pub fn features<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        match self {
            Body::ResNet(m) => m.features(cx, x),
            Body::DenseNet(m) => m.features(cx, x),
            Body::EfficientNet(m) => m.features(cx, x),
            Body::Vit(m) => m.features(cx, x),
        }
    }
}
