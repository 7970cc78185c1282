use crate::graph::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `x` into the axis order `axes`.
fn permute_tensor<T: Scalar>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let in_shape = x.shape();
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let nd = out_shape.len();
    let mut out = Vec::with_capacity(x.numel());
    let mut idx = vec![0usize; nd];
    let data = x.data();
    for _ in 0..x.numel() {
        let off: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.push(data[off]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(out_shape, out).expect("permute preserves size")
}

impl<'g, T: Scalar> Var<'g, T> {
    pub fn reshape(self, shape: &[usize]) -> Var<'g, T> {
        let x = self.value();
        let in_shape = x.shape().to_vec();
        let y = (*x).clone().reshape(shape.to_vec()).unwrap_or_else(|e| panic!("{e}"));
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| vec![Some(g.clone().reshape(in_shape.clone()).expect("size"))]),
        )
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g, T> {
        let x = self.value();
        assert_eq!(axes.len(), x.ndim(), "permute: axes rank mismatch");
        let y = permute_tensor(&x, axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| vec![Some(permute_tensor(g, &inverse))]),
        )
    }

    /// Sub-range `start..start+len` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        assert!(start + len <= shape[axis], "narrow out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = shape[axis];
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let y = Tensor::new(out_shape, out).expect("narrow size");
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(shape.clone());
                for o in 0..outer {
                    let base = (o * dim + start) * inner;
                    let src = &g.data()[o * len * inner..(o + 1) * len * inner];
                    gx.data_mut()[base..base + len * inner].copy_from_slice(src);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Repeats a `[1, ...]` tensor `n` times along the leading axis.
    pub fn expand0(self, n: usize) -> Var<'g, T> {
        let x = self.value();
        assert_eq!(x.shape()[0], 1, "expand0 needs leading dim 1");
        let mut shape = x.shape().to_vec();
        shape[0] = n;
        let mut data = Vec::with_capacity(x.numel() * n);
        for _ in 0..n {
            data.extend_from_slice(x.data());
        }
        let y = Tensor::new(shape, data).expect("expand size");
        let in_shape = x.shape().to_vec();
        let inner = x.numel();
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| {
                let mut acc = Tensor::zeros(in_shape.clone());
                for chunk in g.data().chunks(inner) {
                    for (a, &v) in acc.data_mut().iter_mut().zip(chunk) {
                        *a += v;
                    }
                }
                vec![Some(acc)]
            }),
        )
    }
}

/// Concatenates along `axis`; all other dimensions must agree.
pub fn concat<'g, T: Scalar>(parts: &[Var<'g, T>], axis: usize) -> Var<'g, T> {
    let graph = parts.first().expect("concat of zero tensors").graph;
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let base = values[0].shape().to_vec();
    for v in &values {
        assert_eq!(v.ndim(), base.len(), "concat rank mismatch");
        for (d, (&a, &b)) in v.shape().iter().zip(&base).enumerate() {
            assert!(d == axis || a == b, "concat: dim {d} differs ({a} vs {b})");
        }
    }
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let dims: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
    let total: usize = dims.iter().sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &d) in values.iter().zip(&dims) {
            out.extend_from_slice(&v.data()[o * d * inner..(o + 1) * d * inner]);
        }
    }
    let mut shape = base.clone();
    shape[axis] = total;
    let y = Tensor::new(shape, out).expect("concat size");
    let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    graph.record(
        y,
        &ids,
        Box::new(move |g, _, needs| {
            let mut grads: Vec<Vec<T>> = dims
                .iter()
                .map(|&d| Vec::with_capacity(outer * d * inner))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &d) in grads.iter_mut().zip(&dims) {
                    gp.extend_from_slice(&g.data()[off..off + d * inner]);
                    off += d * inner;
                }
            }
            grads
                .into_iter()
                .zip(&shapes)
                .zip(needs)
                .map(|((data, shape), &need)| {
                    need.then(|| Tensor::new(shape.clone(), data).expect("split size"))
                })
                .collect()
        }),
    )
}
