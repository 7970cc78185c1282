//! Parameterized layers. Each layer owns [`ParamId`]s into a caller-provided
//! [`ParamStore`] and is applied through a [`Ctx`].

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::init::Init;
use crate::params::{Group, ParamId, ParamStore};
use crate::scalar::Scalar;

/// A graph paired with the store whose parameters are being bound.
#[derive(Clone, Copy)]
pub struct Ctx<'g, 's, T> {
    pub graph: &'g Graph<T>,
    pub store: &'s ParamStore<T>,
}

impl<'g, 's, T: Scalar> Ctx<'g, 's, T> {
    pub fn new(graph: &'g Graph<T>, store: &'s ParamStore<T>) -> Self {
        Self { graph, store }
    }

    pub fn p(&self, id: ParamId) -> Var<'g, T> {
        self.graph.param(self.store, id)
    }
}

/// Shared construction context: target store, name prefix, group and rng.
pub struct Builder<'a, T, R: ?Sized> {
    pub store: &'a mut ParamStore<T>,
    pub group: Group,
    prefix: String,
    pub rng: &'a mut R,
}

impl<'a, T: Scalar, R: Rng + ?Sized> Builder<'a, T, R> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut R) -> Self {
        Self {
            store,
            group: Group::Body,
            prefix: String::new(),
            rng,
        }
    }

    pub fn with_group(mut self, group: Group) -> Self {
        self.group = group;
        self
    }

    pub fn name(&self, local: &str) -> String {
        if self.prefix.is_empty() {
            local.to_string()
        } else {
            format!("{}.{}", self.prefix, local)
        }
    }

    /// Runs `f` with `segment` appended to the name prefix.
    pub fn scoped<O>(&mut self, segment: &str, f: impl FnOnce(&mut Self) -> O) -> O {
        let saved = self.prefix.clone();
        self.prefix = self.name(segment);
        let out = f(self);
        self.prefix = saved;
        out
    }

    pub fn param(&mut self, local: &str, shape: Vec<usize>, fan_in: usize, init: Init) -> ParamId {
        let value = init.tensor(shape, fan_in, self.rng);
        let name = self.name(local);
        self.store.add(name, value, self.group)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let fan_in = in_c * k * k;
        b.scoped(name, |b| Self {
            weight: b.param("weight", vec![out_c, in_c, k, k], fan_in, init),
            bias: bias.then(|| b.param("bias", vec![out_c], fan_in, Init::Zeros)),
            stride,
            pad,
        })
    }

    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.conv2d(cx.p(self.weight), self.bias.map(|b| cx.p(b)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let fan_in = out_c * k * k;
        b.scoped(name, |b| Self {
            weight: b.param("weight", vec![in_c, out_c, k, k], fan_in, init),
            bias: bias.then(|| b.param("bias", vec![out_c], fan_in, Init::Zeros)),
            stride,
            pad,
            out_pad,
        })
    }

    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.conv_transpose2d(
            cx.p(self.weight),
            self.bias.map(|b| cx.p(b)),
            self.stride,
            self.pad,
            self.out_pad,
        )
    }
}

#[derive(Clone, Debug)]
pub struct DepthwiseConv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl DepthwiseConv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        name: &str,
        channels: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        b.scoped(name, |b| Self {
            weight: b.param("weight", vec![channels, 1, k, k], k * k, init),
            bias: bias.then(|| b.param("bias", vec![channels], k * k, Init::Zeros)),
            stride,
            pad,
        })
    }

    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.depthwise_conv2d(cx.p(self.weight), self.bias.map(|b| cx.p(b)), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut Builder<'_, T, R>,
        name: &str,
        in_f: usize,
        out_f: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        b.scoped(name, |b| Self {
            weight: b.param("weight", vec![out_f, in_f], in_f, init),
            bias: bias.then(|| b.param("bias", vec![out_f], in_f, Init::Zeros)),
        })
    }

    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.linear(cx.p(self.weight), self.bias.map(|b| cx.p(b)))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut Builder<'_, T, R>, name: &str, dim: usize) -> Self {
        b.scoped(name, |b| Self {
            gamma: b.param("weight", vec![dim], dim, Init::Ones),
            beta: b.param("bias", vec![dim], dim, Init::Zeros),
            eps: 1e-6,
        })
    }

    pub fn forward<'g, T: Scalar>(&self, cx: &Ctx<'g, '_, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.layer_norm(cx.p(self.gamma), cx.p(self.beta), T::lit(self.eps))
    }
}
