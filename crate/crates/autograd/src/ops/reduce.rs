use crate::graph::Var;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<'g, T: Scalar> Var<'g, T> {
    pub fn sum_all(self) -> Var<'g, T> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let y = Tensor::scalar(x.sum());
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| vec![Some(Tensor::full(shape.clone(), g.data()[0]))]),
        )
    }

    pub fn mean_all(self) -> Var<'g, T> {
        let n = T::from_usize_lossy(self.value().numel().max(1));
        self.sum_all().scale(T::one() / n)
    }

    /// Mean over every axis after the second: `[n, c, ...] -> [n, c]`.
    pub fn global_avg_pool(self) -> Var<'g, T> {
        let x = self.value();
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let plane = x.numel() / (n * c).max(1);
        let inv = T::one() / T::from_usize_lossy(plane.max(1));
        let data = x
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        let y = Tensor::new(vec![n, c], data).expect("pool size");
        let shape = x.shape().to_vec();
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| {
                let mut gx = Vec::with_capacity(plane * n * c);
                for &v in g.data() {
                    gx.extend(std::iter::repeat_n(v * inv, plane));
                }
                vec![Some(Tensor::new(shape.clone(), gx).expect("pool grad"))]
            }),
        )
    }

    /// Non-overlapping `k x k` average pooling; trailing rows/cols that do
    /// not fill a window are dropped.
    pub fn avg_pool2d(self, k: usize) -> Var<'g, T> {
        let x = self.value();
        let (n, c, h, w) = x.dims4().unwrap_or_else(|e| panic!("{e}"));
        let (oh, ow) = (h / k, w / k);
        assert!(oh > 0 && ow > 0, "avg_pool2d: input {h}x{w} smaller than window {k}");
        let inv = T::one() / T::from_usize_lossy(k * k);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for p in 0..n * c {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = T::zero();
                    for di in 0..k {
                        for dj in 0..k {
                            s += src[(i * k + di) * w + j * k + dj];
                        }
                    }
                    dst[i * ow + j] = s * inv;
                }
            }
        }
        let y = Tensor::new(vec![n, c, oh, ow], out).expect("pool size");
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(vec![n, c, h, w]);
                for p in 0..n * c {
                    let src = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                    let dst = &mut gx.data_mut()[p * h * w..(p + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            let v = src[i * ow + j] * inv;
                            for di in 0..k {
                                for dj in 0..k {
                                    dst[(i * k + di) * w + j * k + dj] = v;
                                }
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}
