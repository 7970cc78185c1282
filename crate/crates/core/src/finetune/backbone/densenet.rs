use ctaug_autograd::nn::Conv2d;
use ctaug_autograd::ops::concat;
use ctaug_autograd::{Builder, Ctx, Init, Scalar, Var};
use rand::Rng;

use super::Stem;

#[derive(Clone, Debug)]
pub struct DenseNetConfig {
    pub stem: Stem,
    pub blocks: Vec<usize>,
    pub growth: usize,
    /// Bottleneck width as a multiple of `growth`.
    pub bn_size: usize,
}

impl DenseNetConfig {
    pub fn densenet121() -> Self {
        Self {
            stem: Stem::large(64),
            blocks: vec![6, 12, 24, 16],
            growth: 32,
            bn_size: 4,
        }
    }

    pub fn tiny() -> Self {
        Self {
            stem: Stem::small(16),
            blocks: vec![2, 2],
            growth: 8,
            bn_size: 2,
        }
    }

    /// Channel count entering each dense block, and the final width.
    fn widths(&self) -> (Vec<usize>, usize) {
        let mut c = self.stem.width;
        let mut entering = Vec::with_capacity(self.blocks.len());
        for (i, &n) in self.blocks.iter().enumerate() {
            entering.push(c);
            c += n * self.growth;
            if i + 1 < self.blocks.len() {
                c /= 2;
            }
        }
        (entering, c)
    }

    pub fn feature_dim(&self) -> usize {
        self.widths().1
    }

    pub fn output_side(&self, input: usize) -> usize {
        let d = self.stem.output_side(input);
        d >> (self.blocks.len().saturating_sub(1))
    }
}

#[derive(Clone, Debug)]
struct DenseLayer {
    bottleneck: Conv2d,
    conv: Conv2d,
}

#[derive(Clone, Debug)]
struct Transition {
    conv: Conv2d,
}

/// Dense blocks of ReLU, 1x1 and 3x3 convs whose outputs are concatenated
/// onto the running feature map; transitions halve channels and resolution.
#[derive(Clone, Debug)]
pub struct DenseNet {
    stem_conv: Conv2d,
    stem_pool: bool,
    blocks: Vec<Vec<DenseLayer>>,
    transitions: Vec<Transition>,
}

impl DenseNet {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &DenseNetConfig) -> Self {
        let stem_conv = cfg.stem.conv(b);
        let (entering, _) = cfg.widths();
        let mid = cfg.bn_size * cfg.growth;
        let mut blocks = Vec::new();
        let mut transitions = Vec::new();
        for (bi, &n) in cfg.blocks.iter().enumerate() {
            let layers = (0..n)
                .map(|li| {
                    let c = entering[bi] + li * cfg.growth;
                    b.scoped(&format!("block{bi}.layer{li}"), |b| DenseLayer {
                        bottleneck: Conv2d::new(b, "conv1", c, mid, 1, 1, 0, true, Init::HeNormal),
                        conv: Conv2d::new(b, "conv2", mid, cfg.growth, 3, 1, 1, true, Init::HeNormal),
                    })
                })
                .collect();
            blocks.push(layers);
            if bi + 1 < cfg.blocks.len() {
                let c = entering[bi] + n * cfg.growth;
                transitions.push(Transition {
                    conv: Conv2d::new(b, &format!("transition{bi}"), c, c / 2, 1, 1, 0, true, Init::HeNormal),
                });
            }
        }
        Self {
            stem_conv,
            stem_pool: cfg.stem.pool,
            blocks,
            transitions,
        }
    }

    pub fn features<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let mut h = self.stem_conv.forward(cx, x).relu();
        if self.stem_pool {
            h = h.avg_pool2d(2);
        }
        for (bi, layers) in self.blocks.iter().enumerate() {
            for l in layers {
                let y = l.bottleneck.forward(cx, h.relu()).relu();
                let y = l.conv.forward(cx, y);
                h = concat(&[h, y], 1);
            }
            if let Some(t) = self.transitions.get(bi) {
                h = t.conv.forward(cx, h.relu()).avg_pool2d(2);
            }
        }
        h.relu().global_avg_pool()
    }
}
