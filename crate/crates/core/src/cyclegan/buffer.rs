use ctaug_autograd::{Scalar, Tensor};
use rand::Rng;

/// Pool of past generator outputs shown to the discriminator.
///
/// Invariant: `len() <= capacity()`, and every image ever returned by
/// [`ReplayBuffer::query`] was previously passed in.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    images: Vec<Tensor<T>>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            images: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// For each image of the `[n, ...]` batch: while filling, store it and
    /// return it; once full, with probability 1/2 return a stored image and
    /// keep the new one in its slot, otherwise return the new image.
    pub fn query<R: Rng + ?Sized>(&mut self, batch: &Tensor<T>, rng: &mut R) -> Tensor<T> {
        if self.capacity == 0 {
            return batch.clone();
        }
        let n = batch.shape()[0];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let img = batch.narrow_batch(i, 1).expect("index within batch");
            if self.images.len() < self.capacity {
                self.images.push(img.clone());
                out.push(img);
            } else if rng.random::<f64>() < 0.5 {
                let slot = rng.random_range(0..self.capacity);
                out.push(std::mem::replace(&mut self.images[slot], img));
            } else {
                out.push(img);
            }
        }
        Tensor::concat_batch(&out).expect("same image shapes")
    }
}
