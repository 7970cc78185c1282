use ctaug_autograd::nn::{Conv2d, LayerNorm, Linear};
use ctaug_autograd::ops::concat;
use ctaug_autograd::{Builder, Ctx, Init, ParamId, Scalar, Var};
use rand::Rng;

pub const PATCH: usize = 16;

#[derive(Clone, Debug)]
pub struct VitConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_dim: usize,
}

impl VitConfig {
    /// Base/16 configuration.
    pub fn base() -> Self {
        Self {
            dim: 768,
            depth: 12,
            heads: 12,
            mlp_dim: 3072,
        }
    }

    pub fn tiny() -> Self {
        Self {
            dim: 32,
            depth: 2,
            heads: 2,
            mlp_dim: 64,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }
}

#[derive(Clone, Debug)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    proj: Linear,
    heads: usize,
}

impl Attention {
    fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let s = x.shape();
        let (n, t, dim) = (s[0], s[1], s[2]);
        let (h, d) = (self.heads, dim / self.heads);
        let split = |v: Var<'g, T>| v.reshape(&[n, t, h, d]).permute(&[0, 2, 1, 3]).reshape(&[n * h, t, d]);
        let q = split(self.q.forward(cx, x));
        let k = split(self.k.forward(cx, x));
        let v = split(self.v.forward(cx, x));
        let attn = q.bmm(k, true).scale(T::lit(1.0 / (d as f64).sqrt())).softmax_last();
        let out = attn
            .bmm(v, false)
            .reshape(&[n, h, t, d])
            .permute(&[0, 2, 1, 3])
            .reshape(&[n, t, dim]);
        self.proj.forward(cx, out)
    }
}

#[derive(Clone, Debug)]
struct Block {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// Pre-norm transformer encoder over 16x16 patches with a class token whose
/// final embedding is the feature vector.
#[derive(Clone, Debug)]
pub struct Vit {
    patch: Conv2d,
    cls: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
    norm: LayerNorm,
    dim: usize,
}

impl Vit {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, cfg: &VitConfig, input_dim: usize) -> Self {
        let dim = cfg.dim;
        let tokens = (input_dim / PATCH).pow(2) + 1;
        let patch = Conv2d::new(b, "patch_embed", 3, dim, PATCH, PATCH, 0, true, Init::FanInUniform);
        let cls = b.param("cls_token", vec![1, 1, dim], dim, Init::Normal(0.02));
        let pos = b.param("pos_embed", vec![1, tokens, dim], dim, Init::Normal(0.02));
        let blocks = (0..cfg.depth)
            .map(|i| {
                b.scoped(&format!("block{i}"), |b| Block {
                    ln1: LayerNorm::new(b, "norm1", dim),
                    attn: b.scoped("attn", |b| Attention {
                        q: Linear::new(b, "q", dim, dim, true, Init::FanInUniform),
                        k: Linear::new(b, "k", dim, dim, true, Init::FanInUniform),
                        v: Linear::new(b, "v", dim, dim, true, Init::FanInUniform),
                        proj: Linear::new(b, "proj", dim, dim, true, Init::Zeros),
                        heads: cfg.heads,
                    }),
                    ln2: LayerNorm::new(b, "norm2", dim),
                    fc1: Linear::new(b, "fc1", dim, cfg.mlp_dim, true, Init::FanInUniform),
                    fc2: Linear::new(b, "fc2", cfg.mlp_dim, dim, true, Init::Zeros),
                })
            })
            .collect();
        let norm = LayerNorm::new(b, "norm", dim);
        Self {
            patch,
            cls,
            pos,
            blocks,
            norm,
            dim,
        }
    }

    pub fn features<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        let n = x.shape()[0];
        let p = self.patch.forward(cx, x);
        let g = p.shape()[2] * p.shape()[3];
        let patches = p.reshape(&[n, self.dim, g]).permute(&[0, 2, 1]);
        let mut h = concat(&[cx.p(self.cls).expand0(n), patches], 1).add_broadcast0(cx.p(self.pos));
        for blk in &self.blocks {
            h = h.add(blk.attn.forward(cx, blk.ln1.forward(cx, h)));
            let m = blk.fc1.forward(cx, blk.ln2.forward(cx, h)).gelu();
            h = h.add(blk.fc2.forward(cx, m));
        }
        self.norm.forward(cx, h).narrow(1, 0, 1).reshape(&[n, self.dim])
    }
}
