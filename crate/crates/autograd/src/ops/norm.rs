use crate::graph::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Normalizes each contiguous chunk of `size` elements to zero mean and unit
/// variance. Returns the normalized values and per-chunk inverse std.
fn standardize_chunks<T: Scalar>(data: &[T], size: usize, eps: T) -> (Vec<T>, Vec<T>) {
    let inv_n = T::one() / T::from_usize_lossy(size);
    let mut out = Vec::with_capacity(data.len());
    let mut inv_std = Vec::with_capacity(data.len() / size.max(1));
    for chunk in data.chunks(size) {
        let mean = chunk.iter().copied().sum::<T>() * inv_n;
        let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        out.extend(chunk.iter().map(|&v| (v - mean) * is));
    }
    (out, inv_std)
}

/// `dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))` per chunk.
fn standardize_backward<T: Scalar>(dxhat: &[T], xhat: &[T], inv_std: &[T], size: usize) -> Vec<T> {
    let inv_n = T::one() / T::from_usize_lossy(size);
    let mut out = Vec::with_capacity(dxhat.len());
    for ((dc, xc), &is) in dxhat.chunks(size).zip(xhat.chunks(size)).zip(inv_std) {
        let mean_d = dc.iter().copied().sum::<T>() * inv_n;
        let mean_dx = dc.iter().zip(xc).map(|(&d, &x)| d * x).sum::<T>() * inv_n;
        out.extend(dc.iter().zip(xc).map(|(&d, &x)| is * (d - mean_d - x * mean_dx)));
    }
    out
}

impl<'g, T: Scalar> Var<'g, T> {
    /// Instance normalization without affine parameters: every `[n, c]`
    /// plane is standardized independently.
    pub fn instance_norm(self, eps: T) -> Var<'g, T> {
        let x = self.value();
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let plane = x.numel() / (n * c).max(1);
        let (xhat, inv_std) = standardize_chunks(x.data(), plane, eps);
        let y = Tensor::new(x.shape().to_vec(), xhat).expect("norm size");
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, out, _| {
                let dx = standardize_backward(g.data(), out.data(), &inv_std, plane);
                vec![Some(Tensor::new(g.shape().to_vec(), dx).expect("norm grad"))]
            }),
        )
    }

    /// Layer normalization over the last axis with learned `gamma`, `beta`.
    pub fn layer_norm(self, gamma: Var<'g, T>, beta: Var<'g, T>, eps: T) -> Var<'g, T> {
        let x = self.value();
        let d = *x.shape().last().expect("layer_norm on scalar");
        let (gm, bt) = (gamma.value(), beta.value());
        assert_eq!(gm.shape(), &[d], "layer_norm: gamma must be [{d}]");
        assert_eq!(bt.shape(), &[d], "layer_norm: beta must be [{d}]");
        let (xhat, inv_std) = standardize_chunks(x.data(), d, eps);
        let y: Vec<T> = xhat
            .chunks(d)
            .flat_map(|ch| {
                ch.iter()
                    .zip(gm.data())
                    .zip(bt.data())
                    .map(|((&v, &g), &b)| v * g + b)
                    .collect::<Vec<_>>()
            })
            .collect();
        let y = Tensor::new(x.shape().to_vec(), y).expect("layer_norm size");
        self.graph.record(
            y,
            &[self.id, gamma.id, beta.id],
            Box::new(move |g, _, needs| {
                let gx = needs[0].then(|| {
                    let dxhat: Vec<T> = g
                        .data()
                        .chunks(d)
                        .flat_map(|ch| ch.iter().zip(gm.data()).map(|(&a, &b)| a * b).collect::<Vec<_>>())
                        .collect();
                    let dx = standardize_backward(&dxhat, &xhat, &inv_std, d);
                    Tensor::new(g.shape().to_vec(), dx).expect("ln grad")
                });
                let gg = needs[1].then(|| {
                    let mut acc = vec![T::zero(); d];
                    for (gc, xc) in g.data().chunks(d).zip(xhat.chunks(d)) {
                        for ((a, &gv), &xv) in acc.iter_mut().zip(gc).zip(xc) {
                            *a += gv * xv;
                        }
                    }
                    Tensor::new(vec![d], acc).expect("gamma grad")
                });
                let gb = needs[2].then(|| {
                    let mut acc = vec![T::zero(); d];
                    for gc in g.data().chunks(d) {
                        for (a, &gv) in acc.iter_mut().zip(gc) {
                            *a += gv;
                        }
                    }
                    Tensor::new(vec![d], acc).expect("beta grad")
                });
                vec![gx, gg, gb]
            }),
        )
    }
}
