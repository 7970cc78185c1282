use crate::graph::Var;
use crate::scalar::{gemm, Scalar};
use crate::tensor::Tensor;

impl<'g, T: Scalar> Var<'g, T> {
    /// Affine map over the last axis: `[.., in] x [out, in]^T + [out]`.
    pub fn linear(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>) -> Var<'g, T> {
        let x = self.value();
        let w = weight.value();
        let inp = *x.shape().last().expect("linear on scalar");
        let (out_f, w_in) = match w.shape() {
            &[o, i] => (o, i),
            s => panic!("linear: weight must be 2-D, got {s:?}"),
        };
        assert_eq!(w_in, inp, "linear: weight expects {w_in} inputs, got {inp}");
        let m = x.numel() / inp;
        let mut y = vec![T::zero(); m * out_f];
        gemm(false, true, m, out_f, inp, T::one(), x.data(), w.data(), T::zero(), &mut y);
        if let Some(b) = bias.map(|b| b.value()) {
            assert_eq!(b.shape(), &[out_f], "linear: bias must be [{out_f}]");
            for row in y.chunks_mut(out_f) {
                for (v, &bv) in row.iter_mut().zip(b.data()) {
                    *v += bv;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("non-empty") = out_f;
        let y = Tensor::new(shape, y).expect("linear size");
        let mut parents = vec![self.id, weight.id];
        if let Some(b) = bias {
            parents.push(b.id);
        }
        self.graph.record(
            y,
            &parents,
            Box::new(move |g, _, needs| {
                let gx = needs[0].then(|| {
                    let mut gx = Tensor::zeros(x.shape().to_vec());
                    gemm(false, false, m, inp, out_f, T::one(), g.data(), w.data(), T::zero(), gx.data_mut());
                    gx
                });
                let gw = needs[1].then(|| {
                    let mut gw = Tensor::zeros(vec![out_f, inp]);
                    gemm(true, false, out_f, inp, m, T::one(), g.data(), x.data(), T::zero(), gw.data_mut());
                    gw
                });
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut gb = vec![T::zero(); out_f];
                        for row in g.data().chunks(out_f) {
                            for (a, &v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        Tensor::new(vec![out_f], gb).expect("bias grad")
                    }));
                }
                grads
            }),
        )
    }

    /// Batched product `[b, m, k] x [b, k, n]`, or `[b, m, k] x [b, n, k]^T`
    /// when `trans_rhs` is set.
    pub fn bmm(self, rhs: Var<'g, T>, trans_rhs: bool) -> Var<'g, T> {
        let a = self.value();
        let b = rhs.value();
        let (bs, m, k) = match a.shape() {
            &[bs, m, k] => (bs, m, k),
            s => panic!("bmm: lhs must be 3-D, got {s:?}"),
        };
        let n = match (b.shape(), trans_rhs) {
            (&[bb, kk, n], false) if bb == bs && kk == k => n,
            (&[bb, n, kk], true) if bb == bs && kk == k => n,
            (s, _) => panic!("bmm: incompatible rhs {s:?} for lhs {:?}", a.shape()),
        };
        let mut y = vec![T::zero(); bs * m * n];
        for i in 0..bs {
            gemm(
                false,
                trans_rhs,
                m,
                n,
                k,
                T::one(),
                &a.data()[i * m * k..(i + 1) * m * k],
                &b.data()[i * k * n..(i + 1) * k * n],
                T::zero(),
                &mut y[i * m * n..(i + 1) * m * n],
            );
        }
        let y = Tensor::new(vec![bs, m, n], y).expect("bmm size");
        self.graph.record(
            y,
            &[self.id, rhs.id],
            Box::new(move |g, _, needs| {
                let ga = needs[0].then(|| {
                    let mut ga = Tensor::zeros(vec![bs, m, k]);
                    for i in 0..bs {
                        gemm(
                            false,
                            !trans_rhs,
                            m,
                            k,
                            n,
                            T::one(),
                            &g.data()[i * m * n..(i + 1) * m * n],
                            &b.data()[i * k * n..(i + 1) * k * n],
                            T::zero(),
                            &mut ga.data_mut()[i * m * k..(i + 1) * m * k],
                        );
                    }
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = Tensor::zeros(b.shape().to_vec());
                    for i in 0..bs {
                        let gi = &g.data()[i * m * n..(i + 1) * m * n];
                        let ai = &a.data()[i * m * k..(i + 1) * m * k];
                        let dst = &mut gb.data_mut()[i * k * n..(i + 1) * k * n];
                        if trans_rhs {
                            gemm(true, false, n, k, m, T::one(), gi, ai, T::zero(), dst);
                        } else {
                            gemm(true, false, k, n, m, T::one(), ai, gi, T::zero(), dst);
                        }
                    }
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    /// Softmax over the last axis.
    pub fn softmax_last(self) -> Var<'g, T> {
        let x = self.value();
        let d = *x.shape().last().expect("softmax on scalar");
        let y = Tensor::new(x.shape().to_vec(), softmax_rows(x.data(), d)).expect("softmax size");
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, out, _| {
                let mut gx = Vec::with_capacity(g.numel());
                for (gc, yc) in g.data().chunks(d).zip(out.data().chunks(d)) {
                    let dot: T = gc.iter().zip(yc).map(|(&a, &b)| a * b).sum();
                    gx.extend(gc.iter().zip(yc).map(|(&gv, &yv)| yv * (gv - dot)));
                }
                vec![Some(Tensor::new(g.shape().to_vec(), gx).expect("softmax grad"))]
            }),
        )
    }
}

/// Numerically stable row-wise softmax of contiguous rows of width `d`.
pub fn softmax_rows<T: Scalar>(data: &[T], d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(d) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut total = T::zero();
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    out
}
