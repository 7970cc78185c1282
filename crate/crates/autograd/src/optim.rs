use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::{Group, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    steps: u64,
}

/// Adaptive-moment optimizer bound to one [`ParamStore`] layout.
///
/// Step counts are tracked per parameter so that parameters which start
/// receiving gradients late (e.g. after an unfreeze) get full bias
/// correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    state: Vec<Option<Moments<T>>>,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: Vec<Option<u64>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self {
            beta1: T::lit(beta1),
            beta2: T::lit(beta2),
            eps: T::lit(1e-8),
            state: Vec::new(),
        }
    }

    /// Applies one update to every parameter that has a gradient.
    /// `lr` maps a parameter group to its learning rate; a zero rate leaves
    /// the parameter untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: impl Fn(Group) -> T) {
        if self.state.len() < store.len() {
            self.state.resize_with(store.len(), || None);
        }
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(store, id) else {
                continue;
            };
            let rate = lr(store.param(id).group);
            let slot = self.state[id.index()].get_or_insert_with(|| Moments {
                m: vec![T::zero(); g.numel()],
                v: vec![T::zero(); g.numel()],
                steps: 0,
            });
            slot.steps += 1;
            let t = slot.steps as i32;
            let (b1, b2) = (self.beta1, self.beta2);
            for ((m, v), &gv) in slot.m.iter_mut().zip(slot.v.iter_mut()).zip(g.data()) {
                *m = b1 * *m + (T::one() - b1) * gv;
                *v = b2 * *v + (T::one() - b2) * gv * gv;
            }
            if rate == T::zero() {
                continue;
            }
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            let step = rate / c1;
            let p = store.value_mut(id);
            for ((w, &m), &v) in p.data_mut().iter_mut().zip(&slot.m).zip(&slot.v) {
                *w -= step * m / ((v / c2).sqrt() + self.eps);
            }
        }
    }

    /// Writes moments under `prefix` and returns serializable metadata.
    pub fn save(&self, store: &ParamStore<T>, prefix: &str, archive: &mut Archive) -> serde_json::Value {
        let mut steps = Vec::with_capacity(store.len());
        for (id, p) in store.iter() {
            match self.state.get(id.index()).and_then(Option::as_ref) {
                Some(s) => {
                    let shape = p.value.shape().to_vec();
                    archive.put(
                        format!("{prefix}.m.{}", p.name),
                        &Tensor::new(shape.clone(), s.m.clone()).expect("moment shape"),
                    );
                    archive.put(
                        format!("{prefix}.v.{}", p.name),
                        &Tensor::new(shape, s.v.clone()).expect("moment shape"),
                    );
                    steps.push(Some(s.steps));
                }
                None => steps.push(None),
            }
        }
        serde_json::to_value(AdamMeta {
            beta1: self.beta1.to_f64().unwrap_or_default(),
            beta2: self.beta2.to_f64().unwrap_or_default(),
            eps: self.eps.to_f64().unwrap_or_default(),
            steps,
        })
        .expect("adam metadata serializes")
    }

    pub fn load(
        store: &ParamStore<T>,
        prefix: &str,
        archive: &Archive,
        meta: &serde_json::Value,
    ) -> Result<Self> {
        let meta: AdamMeta = serde_json::from_value(meta.clone())
            .map_err(|e| Error::Archive(format!("optimizer metadata: {e}")))?;
        if meta.steps.len() != store.len() {
            return Err(Error::Archive(format!(
                "optimizer state covers {} parameters, store has {}",
                meta.steps.len(),
                store.len()
            )));
        }
        let mut state = Vec::with_capacity(store.len());
        for ((_, p), steps) in store.iter().zip(meta.steps) {
            state.push(match steps {
                Some(steps) => Some(Moments {
                    m: archive.get::<T>(&format!("{prefix}.m.{}", p.name))?.into_data(),
                    v: archive.get::<T>(&format!("{prefix}.v.{}", p.name))?.into_data(),
                    steps,
                }),
                None => None,
            });
        }
        Ok(Self {
            beta1: T::lit(meta.beta1),
            beta2: T::lit(meta.beta2),
            eps: T::lit(meta.eps),
            state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor::new(vec![2], vec![3.0, -2.0]).unwrap(), Group::Body);
        let mut opt = Adam::new(0.9, 0.999);
        for _ in 0..2000 {
            let g = Graph::new();
            g.track(&store);
            let loss = g.param(&store, id).square().sum_all();
            let grads = g.backward(loss);
            opt.step(&mut store, &grads, |_| 0.05);
        }
        assert!(store.value(id).data().iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn zero_rate_leaves_parameters_bitwise_unchanged() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("x", Tensor::new(vec![3], vec![0.1, -0.7, 2.5]).unwrap(), Group::Head);
        let before = store.value(id).clone();
        let mut opt = Adam::new(0.5, 0.999);
        for _ in 0..5 {
            let g = Graph::new();
            g.track(&store);
            let loss = g.param(&store, id).square().sum_all();
            let grads = g.backward(loss);
            opt.step(&mut store, &grads, |_| 0.0);
        }
        assert_eq!(store.value(id), &before);
    }
}
