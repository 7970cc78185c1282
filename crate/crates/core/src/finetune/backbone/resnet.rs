use ctaug_autograd::nn::{Conv2d, Linear};
use ctaug_autograd::{Builder, Ctx, Init, Scalar, Var};
use rand::Rng;

use super::{conv_side, Stem};

#[derive(Clone, Debug)]
pub struct StageConfig {
    pub mid: usize,
    pub out: usize,
    pub stride: usize,
    pub blocks: usize,
}

#[derive(Clone, Debug)]
pub struct ResNetConfig {
    pub stem: Stem,
    pub stages: Vec<StageConfig>,
    /// Replace each 3x3 conv with two-way split attention.
    pub split_attention: bool,
}

impl ResNetConfig {
    pub fn resnet50() -> Self {
        Self {
            stem: Stem::large(64),
            stages: [(64, 1, 3), (128, 2, 4), (256, 2, 6), (512, 2, 3)]
                .into_iter()
                .map(|(mid, stride, blocks)| StageConfig {
                    mid,
                    out: 4 * mid,
                    stride,
                    blocks,
                })
                .collect(),
            split_attention: false,
        }
    }

    pub fn tiny() -> Self {
        Self {
            stem: Stem::small(16),
            stages: vec![
                StageConfig {
                    mid: 8,
                    out: 32,
                    stride: 1,
                    blocks: 1,
                },
                StageConfig {
                    mid: 16,
                    out: 64,
                    stride: 2,
                    blocks: 1,
                },
            ],
            split_attention: false,
        }
    }

    pub fn with_split_attention(mut self) -> Self {
        self.split_attention = true;
        self
    }

    pub fn feature_dim(&self) -> usize {
        self.stages.last().map_or(self.stem.width, |s| s.out)
    }

    pub fn output_side(&self, input: usize) -> usize {
        let mut d = self.stem.output_side(input);
        for s in &self.stages {
            d = conv_side(d, 3, s.stride);
        }
        d
    }
}

/// Two-branch split attention: branch weights are a softmax over the pair,
/// computed as `sigmoid(a - b)` and `sigmoid(b - a)`.
#[derive(Clone, Debug)]
struct SplitAttention {
    conv: Conv2d,
    fc1: Linear,
    fc2: Linear,
    width: usize,
}

impl SplitAttention {
    fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, width: usize, stride: usize) -> Self {
        let inter = (width / 2).max(8);
        Self {
            conv: Conv2d::new(b, "conv", width, 2 * width, 3, stride, 1, true, Init::HeNormal),
            fc1: Linear::new(b, "fc1", width, inter, true, Init::HeNormal),
            fc2: Linear::new(b, "fc2", inter, 2 * width, true, Init::FanInUniform),
            width,
        }
    }

    fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let w = self.width;
        let both = self.conv.forward(cx, x).relu();
        let (a, b) = (both.narrow(1, 0, w), both.narrow(1, w, w));
        let gap = a.add(b).global_avg_pool();
        let logits = self.fc2.forward(cx, self.fc1.forward(cx, gap).relu());
        let (la, lb) = (logits.narrow(1, 0, w), logits.narrow(1, w, w));
        a.scale_channels(la.sub(lb).sigmoid())
            .add(b.scale_channels(lb.sub(la).sigmoid()))
    }
}

#[derive(Clone, Debug)]
enum Middle {
    Plain(Conv2d),
    Split(SplitAttention),
}

/// 1x1 reduce, 3x3 (or split attention), 1x1 expand with a zero-initialized
/// expand conv so each block starts as its shortcut.
#[derive(Clone, Debug)]
struct Bottleneck {
    reduce: Conv2d,
    middle: Middle,
    expand: Conv2d,
    shortcut: Option<Conv2d>,
}

impl Bottleneck {
    fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        in_c: usize,
        s: &StageConfig,
        stride: usize,
        split: bool,
    ) -> Self {
        let reduce = Conv2d::new(b, "reduce", in_c, s.mid, 1, 1, 0, true, Init::HeNormal);
        let middle = if split {
            Middle::Split(b.scoped("split", |b| SplitAttention::new(b, s.mid, stride)))
        } else {
            Middle::Plain(Conv2d::new(b, "conv", s.mid, s.mid, 3, stride, 1, true, Init::HeNormal))
        };
        let expand = Conv2d::new(b, "expand", s.mid, s.out, 1, 1, 0, true, Init::Zeros);
        let shortcut = (stride != 1 || in_c != s.out)
            .then(|| Conv2d::new(b, "shortcut", in_c, s.out, 1, stride, 0, true, Init::HeNormal));
        Self {
            reduce,
            middle,
            expand,
            shortcut,
        }
    }

    fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let h = self.reduce.forward(cx, x).relu();
        let h = match &self.middle {
            Middle::Plain(c) => c.forward(cx, h).relu(),
            Middle::Split(s) => s.forward(cx, h),
        };
        let h = self.expand.forward(cx, h);
        let skip = match &self.shortcut {
            Some(c) => c.forward(cx, x),
            None => x,
        };
        h.add(skip).relu()
    }
}

#[derive(Clone, Debug)]
pub struct ResNet {
    stem_conv: Conv2d,
    stem_pool: bool,
    blocks: Vec<Bottleneck>,
}

impl ResNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &ResNetConfig) -> Self {
        let stem_conv = cfg.stem.conv(b);
        let mut in_c = cfg.stem.width;
        let mut blocks = Vec::new();
        for (si, s) in cfg.stages.iter().enumerate() {
            for bi in 0..s.blocks {
                let stride = if bi == 0 { s.stride } else { 1 };
                let blk = b.scoped(&format!("stage{si}.block{bi}"), |b| {
                    Bottleneck::new(b, in_c, s, stride, cfg.split_attention)
                });
                blocks.push(blk);
                in_c = s.out;
            }
        }
        Self {
            stem_conv,
            stem_pool: cfg.stem.pool,
            blocks,
        }
    }

    pub fn features<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let mut h = self.stem_conv.forward(cx, x).relu();
        if self.stem_pool {
            h = h.avg_pool2d(2);
        }
        for blk in &self.blocks {
            h = blk.forward(cx, h);
        }
        h.global_avg_pool()
    }
}
