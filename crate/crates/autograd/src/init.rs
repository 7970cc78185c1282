use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Weight initialization schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// N(0, std^2).
    Normal(f64),
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    FanInUniform,
    /// N(0, 2/fan_in).
    HeNormal,
}

impl Init {
    pub fn tensor<T: Scalar, R: Rng + ?Sized>(
        self,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Tensor<T> {
        let fan_in = fan_in.max(1) as f64;
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::Normal(std) => sample(shape, Normal::new(0.0, std).expect("finite std"), rng),
            Init::HeNormal => sample(
                shape,
                Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std"),
                rng,
            ),
            Init::FanInUniform => {
                let bound = 1.0 / fan_in.sqrt();
                sample(shape, Uniform::new_inclusive(-bound, bound).expect("bound"), rng)
            }
        }
    }
}

fn sample<T: Scalar, D: Distribution<f64>, R: Rng + ?Sized>(
    shape: Vec<usize>,
    dist: D,
    rng: &mut R,
) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}
