use ctaug_autograd::nn::{Conv2d, ConvTranspose2d};
use ctaug_autograd::ops::conv_out_dim;
use ctaug_autograd::{Builder, Ctx, Init, Scalar, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CycleGanError;

const INIT: Init = Init::Normal(0.02);
const IN_EPS: f64 = 1e-5;
const LEAK: f64 = 0.2;

/// Residual translation network: reflect-padded 7x7 stem, two stride-2
/// downsampling convs, `n_res_blocks` residual blocks, two transposed-conv
/// upsamplers and a 7x7 tanh head. Instance normalization without affine
/// parameters follows every conv except the head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub input_dim: usize,
    pub channels: usize,
    pub base_width: usize,
    pub n_res_blocks: usize,
}

impl GeneratorSpec {
    /// Width 64, nine residual blocks from 256 pixels up and six below.
    pub fn standard(input_dim: usize, channels: usize) -> Self {
        Self {
            input_dim,
            channels,
            base_width: 64,
            n_res_blocks: if input_dim >= 256 { 9 } else { 6 },
        }
    }

    pub fn validate(&self) -> Result<(), CycleGanError> {
        if self.input_dim < 8 || !self.input_dim.is_multiple_of(4) {
            return Err(CycleGanError::Spec(format!(
                "generator input_dim {} must be a multiple of 4 and at least 8",
                self.input_dim
            )));
        }
        if self.channels == 0 || self.base_width == 0 {
            return Err(CycleGanError::Spec("generator channels and base_width must be positive".into()));
        }
        Ok(())
    }
}

/// Patch discriminator: a stride-2 4x4 conv with leaky ReLU, `n_layers - 1`
/// further stride-2 convs and one stride-1 conv (each instance-normalized),
/// then a stride-1 conv to one logit per patch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub input_dim: usize,
    pub channels: usize,
    pub base_width: usize,
    pub n_layers: usize,
}

impl DiscriminatorSpec {
    pub fn standard(input_dim: usize, channels: usize) -> Self {
        Self {
            input_dim,
            channels,
            base_width: 64,
            n_layers: 3,
        }
    }

    /// Side of the square logit grid.
    pub fn patch_grid(&self) -> usize {
        let mut d = self.input_dim;
        for _ in 0..self.n_layers {
            d = conv_out_dim(d, 4, 2, 1);
        }
        conv_out_dim(conv_out_dim(d, 4, 1, 1), 4, 1, 1)
    }

    pub fn validate(&self) -> Result<(), CycleGanError> {
        if self.channels == 0 || self.base_width == 0 || self.n_layers == 0 {
            return Err(CycleGanError::Spec(
                "discriminator channels, base_width and n_layers must be positive".into(),
            ));
        }
        let mut d = self.input_dim;
        for _ in 0..self.n_layers {
            if d < 2 {
                break;
            }
            d = conv_out_dim(d, 4, 2, 1);
        }
        // Both stride-1 4x4 convs shrink the side by one.
        if d < 3 {
            return Err(CycleGanError::Spec(format!(
                "discriminator input_dim {} is too small for {} layers",
                self.input_dim, self.n_layers
            )));
        }
        Ok(())
    }

    fn width(&self, i: usize) -> usize {
        self.base_width * (1usize << i.min(3))
    }
}

#[derive(Clone, Debug)]
struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    stem: Conv2d,
    downs: Vec<Conv2d>,
    blocks: Vec<ResBlock>,
    ups: Vec<ConvTranspose2d>,
    head: Conv2d,
}

impl Generator {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, spec: &GeneratorSpec) -> Self {
        let w = spec.base_width;
        let stem = Conv2d::new(b, "stem", spec.channels, w, 7, 1, 0, false, INIT);
        let downs = vec![
            Conv2d::new(b, "down0", w, 2 * w, 3, 2, 1, false, INIT),
            Conv2d::new(b, "down1", 2 * w, 4 * w, 3, 2, 1, false, INIT),
        ];
        let blocks = (0..spec.n_res_blocks)
            .map(|i| {
                b.scoped(&format!("res{i}"), |b| ResBlock {
                    conv1: Conv2d::new(b, "conv1", 4 * w, 4 * w, 3, 1, 0, false, INIT),
                    conv2: Conv2d::new(b, "conv2", 4 * w, 4 * w, 3, 1, 0, false, INIT),
                })
            })
            .collect();
        let ups = vec![
            ConvTranspose2d::new(b, "up0", 4 * w, 2 * w, 3, 2, 1, 1, false, INIT),
            ConvTranspose2d::new(b, "up1", 2 * w, w, 3, 2, 1, 1, false, INIT),
        ];
        let head = Conv2d::new(b, "head", w, spec.channels, 7, 1, 0, true, INIT);
        Self {
            spec: spec.clone(),
            stem,
            downs,
            blocks,
            ups,
            head,
        }
    }

    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let eps = T::lit(IN_EPS);
        let mut h = self.stem.forward(cx, x.pad_reflect(3)).instance_norm(eps).relu();
        for d in &self.downs {
            h = d.forward(cx, h).instance_norm(eps).relu();
        }
        for blk in &self.blocks {
            let r = blk.conv1.forward(cx, h.pad_reflect(1)).instance_norm(eps).relu();
            let r = blk.conv2.forward(cx, r.pad_reflect(1)).instance_norm(eps);
            h = h.add(r);
        }
        for u in &self.ups {
            h = u.forward(cx, h).instance_norm(eps).relu();
        }
        self.head.forward(cx, h.pad_reflect(3)).tanh()
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    convs: Vec<Conv2d>,
    out: Conv2d,
}

impl Discriminator {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, spec: &DiscriminatorSpec) -> Self {
        let mut convs = vec![Conv2d::new(b, "conv0", spec.channels, spec.width(0), 4, 2, 1, true, INIT)];
        for i in 1..spec.n_layers {
            convs.push(Conv2d::new(
                b,
                &format!("conv{i}"),
                spec.width(i - 1),
                spec.width(i),
                4,
                2,
                1,
                false,
                INIT,
            ));
        }
        let n = spec.n_layers;
        convs.push(Conv2d::new(b, &format!("conv{n}"), spec.width(n - 1), spec.width(n), 4, 1, 1, false, INIT));
        let out = Conv2d::new(b, "out", spec.width(n), 1, 4, 1, 1, true, INIT);
        Self {
            spec: spec.clone(),
            convs,
            out,
        }
    }

    /// `[n, c, d, d] -> [n, 1, g, g]` patch logits.
    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let (eps, leak) = (T::lit(IN_EPS), T::lit(LEAK));
        let mut h = self.convs[0].forward(cx, x).leaky_relu(leak);
        for c in &self.convs[1..] {
            h = c.forward(cx, h).instance_norm(eps).leaky_relu(leak);
        }
        self.out.forward(cx, h)
    }
}
