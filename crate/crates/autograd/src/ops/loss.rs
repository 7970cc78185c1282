use crate::graph::Var;
use crate::ops::matmul::softmax_rows;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<'g, T: Scalar> Var<'g, T> {
    /// Mean softmax cross-entropy of `[n, k]` logits against class indices.
    pub fn cross_entropy(self, targets: &[usize]) -> Var<'g, T> {
        let x = self.value();
        let (n, k) = match x.shape() {
            &[n, k] => (n, k),
            s => panic!("cross_entropy: logits must be [n, k], got {s:?}"),
        };
        assert_eq!(targets.len(), n, "cross_entropy: {n} logits rows, {} targets", targets.len());
        assert!(targets.iter().all(|&t| t < k), "cross_entropy: target out of range");
        let probs = softmax_rows(x.data(), k);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let row = &x.data()[i * k..(i + 1) * k];
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
                lse - row[t]
            })
            .sum::<T>()
            * inv_n;
        let targets = targets.to_vec();
        self.graph.record(
            Tensor::scalar(loss),
            &[self.id],
            Box::new(move |g, _, _| {
                let scale = g.data()[0] * inv_n;
                let mut gx = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    gx[i * k + t] -= T::one();
                }
                for v in &mut gx {
                    *v *= scale;
                }
                vec![Some(Tensor::new(vec![n, k], gx).expect("ce grad"))]
            }),
        )
    }

    /// `mean((self - target)^2)` against a constant target value.
    pub fn mse_to(self, target: T) -> Var<'g, T> {
        self.add_scalar(-target).square().mean_all()
    }

    /// `mean(|self - other|)`.
    pub fn l1(self, other: Var<'g, T>) -> Var<'g, T> {
        self.sub(other).abs().mean_all()
    }
}
