// Graph-building methods take `self` by value on a lifetime-bound handle, so
// the operator traits would not fit.
#![allow(clippy::should_implement_trait)]

use crate::graph::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

impl<'g, T: Scalar> Var<'g, T> {
    fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'g, T> {
        let x = self.value();
        let y = x.map(f);
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, out, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(out.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::new(g.shape().to_vec(), data).expect("same shape"))]
            }),
        )
    }

    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b);
        let y = a.zip_map(&b, |x, y| x + y);
        self.graph.record(
            y,
            &[self.id, other.id],
            Box::new(|g, _, needs| {
                vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())]
            }),
        )
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b);
        let y = a.zip_map(&b, |x, y| x - y);
        self.graph.record(
            y,
            &[self.id, other.id],
            Box::new(|g, _, needs| vec![needs[0].then(|| g.clone()), needs[1].then(|| g.map(|v| -v))]),
        )
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b);
        let y = a.zip_map(&b, |x, y| x * y);
        self.graph.record(
            y,
            &[self.id, other.id],
            Box::new(move |g, _, needs| {
                vec![
                    needs[0].then(|| g.zip_map(&b, |g, b| g * b)),
                    needs[1].then(|| g.zip_map(&a, |g, a| g * a)),
                ]
            }),
        )
    }

    pub fn scale(self, factor: T) -> Var<'g, T> {
        let y = self.value().map(|v| v * factor);
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| vec![Some(g.map(|v| v * factor))]),
        )
    }

    pub fn add_scalar(self, c: T) -> Var<'g, T> {
        let y = self.value().map(|v| v + c);
        self.graph
            .record(y, &[self.id], Box::new(|g, _, _| vec![Some(g.clone())]))
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn abs(self) -> Var<'g, T> {
        self.unary(T::abs, |x, _| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn square(self) -> Var<'g, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn relu(self) -> Var<'g, T> {
        self.unary(
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: T) -> Var<'g, T> {
        self.unary(
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn tanh(self) -> Var<'g, T> {
        self.unary(T::tanh, |_, y| T::one() - y * y)
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(self) -> Var<'g, T> {
        self.unary(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// Tanh approximation of the Gaussian error linear unit.
    pub fn gelu(self) -> Var<'g, T> {
        let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
        let k = T::lit(0.044715);
        let half = T::lit(0.5);
        let three = T::lit(3.0);
        self.unary(
            move |x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()),
            move |x, _| {
                let u = c * (x + k * x * x * x);
                let t = u.tanh();
                let du = c * (T::one() + three * k * x * x);
                half * (T::one() + t) + half * x * (T::one() - t * t) * du
            },
        )
    }

    /// Adds `other` of shape `[1, ...]` to every leading slice of `self`.
    pub fn add_broadcast0(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = (self.value(), other.value());
        assert_eq!(b.shape()[0], 1, "add_broadcast0: rhs leading dim must be 1");
        assert_eq!(a.shape()[1..], b.shape()[1..], "add_broadcast0: trailing dims differ");
        let inner = b.numel();
        let mut y = (*a).clone();
        for chunk in y.data_mut().chunks_mut(inner) {
            for (v, &w) in chunk.iter_mut().zip(b.data()) {
                *v += w;
            }
        }
        let b_shape = b.shape().to_vec();
        self.graph.record(
            y,
            &[self.id, other.id],
            Box::new(move |g, _, needs| {
                let gb = needs[1].then(|| {
                    let mut acc = Tensor::zeros(b_shape.clone());
                    for chunk in g.data().chunks(inner) {
                        for (a, &v) in acc.data_mut().iter_mut().zip(chunk) {
                            *a += v;
                        }
                    }
                    acc
                });
                vec![needs[0].then(|| g.clone()), gb]
            }),
        )
    }

    /// Multiplies each `[n, c, ...]` plane of `self` by `scale[n, c]`.
    pub fn scale_channels(self, scale: Var<'g, T>) -> Var<'g, T> {
        let (x, s) = (self.value(), scale.value());
        let (n, c) = (x.shape()[0], x.shape()[1]);
        assert_eq!(s.shape(), &[n, c], "scale_channels: scale must be [n, c]");
        let plane = x.numel() / (n * c).max(1);
        let mut y = (*x).clone();
        for (chunk, &f) in y.data_mut().chunks_mut(plane).zip(s.data()) {
            for v in chunk {
                *v *= f;
            }
        }
        self.graph.record(
            y,
            &[self.id, scale.id],
            Box::new(move |g, _, needs| {
                let gx = needs[0].then(|| {
                    let mut gx = g.clone();
                    for (chunk, &f) in gx.data_mut().chunks_mut(plane).zip(s.data()) {
                        for v in chunk {
                            *v *= f;
                        }
                    }
                    gx
                });
                let gs = needs[1].then(|| {
                    let data = g
                        .data()
                        .chunks(plane)
                        .zip(x.data().chunks(plane))
                        .map(|(gc, xc)| gc.iter().zip(xc).map(|(&a, &b)| a * b).sum())
                        .collect();
                    Tensor::new(vec![n, c], data).expect("shape")
                });
                vec![gx, gs]
            }),
        )
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
