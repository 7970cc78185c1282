use ctaug_autograd::nn::{Conv2d, DepthwiseConv2d, Linear};
use ctaug_autograd::{Builder, Ctx, Init, Scalar, Var};
use rand::Rng;

use super::{conv_side, Stem};

/// One stage of inverted-residual blocks.
#[derive(Clone, Debug)]
pub struct MbStage {
    pub expand: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out: usize,
    pub repeats: usize,
}

#[derive(Clone, Debug)]
pub struct EfficientNetConfig {
    pub stem: Stem,
    pub stages: Vec<MbStage>,
    pub head: usize,
}

fn stages(rows: &[(usize, usize, usize, usize, usize)]) -> Vec<MbStage> {
    rows.iter()
        .map(|&(expand, kernel, stride, out, repeats)| MbStage {
            expand,
            kernel,
            stride,
            out,
            repeats,
        })
        .collect()
}

impl EfficientNetConfig {
    /// B3 widths and depths.
    pub fn b3() -> Self {
        Self {
            stem: Stem::small(40),
            stages: stages(&[
                (1, 3, 1, 24, 2),
                (6, 3, 2, 32, 3),
                (6, 5, 2, 48, 3),
                (6, 3, 2, 96, 5),
                (6, 5, 1, 136, 5),
                (6, 5, 2, 232, 6),
                (6, 3, 1, 384, 2),
            ]),
            head: 1536,
        }
    }

    pub fn tiny() -> Self {
        Self {
            stem: Stem::small(16),
            stages: stages(&[(1, 3, 1, 16, 1), (4, 3, 2, 24, 1), (4, 5, 2, 32, 1)]),
            head: 64,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.head
    }

    pub fn output_side(&self, input: usize) -> usize {
        let mut d = self.stem.output_side(input);
        for s in &self.stages {
            d = conv_side(d, s.kernel, s.stride);
        }
        d
    }
}

#[derive(Clone, Debug)]
struct MbConv {
    expand: Option<Conv2d>,
    depthwise: DepthwiseConv2d,
    se_reduce: Linear,
    se_expand: Linear,
    project: Conv2d,
    residual: bool,
}

impl MbConv {
    fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, in_c: usize, s: &MbStage, stride: usize) -> Self {
        let mid = in_c * s.expand;
        let residual = stride == 1 && in_c == s.out;
        let se_dim = (in_c / 4).max(1);
        Self {
            expand: (s.expand != 1).then(|| Conv2d::new(b, "expand", in_c, mid, 1, 1, 0, true, Init::HeNormal)),
            depthwise: DepthwiseConv2d::new(b, "depthwise", mid, s.kernel, stride, s.kernel / 2, true, Init::HeNormal),
            se_reduce: Linear::new(b, "se_reduce", mid, se_dim, true, Init::HeNormal),
            se_expand: Linear::new(b, "se_expand", se_dim, mid, true, Init::FanInUniform),
            project: Conv2d::new(
                b,
                "project",
                mid,
                s.out,
                1,
                1,
                0,
                true,
                if residual { Init::Zeros } else { Init::FanInUniform },
            ),
            residual,
        }
    }

    fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let mut h = x;
        if let Some(e) = &self.expand {
            h = e.forward(cx, h).silu();
        }
        h = self.depthwise.forward(cx, h).silu();
        let gate = self
            .se_expand
            .forward(cx, self.se_reduce.forward(cx, h.global_avg_pool()).silu())
            .sigmoid();
        h = self.project.forward(cx, h.scale_channels(gate));
        if self.residual {
            h.add(x)
        } else {
            h
        }
    }
}

/// Inverted-residual blocks with depthwise convs and squeeze-excitation.
#[derive(Clone, Debug)]
pub struct EfficientNet {
    stem_conv: Conv2d,
    blocks: Vec<MbConv>,
    head: Conv2d,
}

impl EfficientNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &EfficientNetConfig) -> Self {
        let stem_conv = cfg.stem.conv(b);
        let mut in_c = cfg.stem.width;
        let mut blocks = Vec::new();
        for (si, s) in cfg.stages.iter().enumerate() {
            for bi in 0..s.repeats {
                let stride = if bi == 0 { s.stride } else { 1 };
                blocks.push(b.scoped(&format!("stage{si}.block{bi}"), |b| MbConv::new(b, in_c, s, stride)));
                in_c = s.out;
            }
        }
        let head = Conv2d::new(b, "head", in_c, cfg.head, 1, 1, 0, true, Init::HeNormal);
        Self {
            stem_conv,
            blocks,
            head,
        }
    }

    pub fn features<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let mut h = self.stem_conv.forward(cx, x).silu();
        for blk in &self.blocks {
            h = blk.forward(cx, h);
        }
        self.head.forward(cx, h).silu().global_avg_pool()
    }
}
