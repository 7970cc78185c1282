use ctaug_autograd::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CycleGanError, CycleGanLossWeights, CycleGanModel, CycleGanOptim, LinearDecay, LossBreakdown};
use crate::preprocess::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleGanTrainConfig {
    /// Total steps over the whole schedule, including steps already taken.
    pub total_steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: CycleGanLossWeights,
    pub seed: u64,
}

impl Default for CycleGanTrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 200,
            batch_size: 1,
            learning_rate: 2e-4,
            weights: CycleGanLossWeights::default(),
            seed: 0,
        }
    }
}

/// Rescales `[0, 1]` intensities to the generator range `[-1, 1]`.
pub fn to_generator_range<T: Scalar>(img: &Image<T>) -> Image<T> {
    let two = T::lit(2.0);
    img.map(|v| v * two - T::one())
}

/// Inverse of [`to_generator_range`], clamped to `[0, 1]`.
pub fn from_generator_range<T: Scalar>(img: &Image<T>) -> Image<T> {
    let half = T::lit(0.5);
    img.map(|v| ((v + T::one()) * half).max(T::zero()).min(T::one()))
}

fn sample_batch<T: Scalar, R: Rng + ?Sized>(
    pool: &[Image<T>],
    n: usize,
    rng: &mut R,
) -> Result<Tensor<T>, CycleGanError> {
    let picks: Vec<&Image<T>> = (0..n).map(|_| &pool[rng.random_range(0..pool.len())]).collect();
    Image::batch(&picks).map_err(|e| CycleGanError::Shape(e.to_string()))
}

/// Runs steps `model.step + 1 ..= total_steps` on unpaired batches drawn
/// with replacement from each domain, with a rate that decays linearly over
/// the second half of the schedule. Images must already be in `[-1, 1]`.
/// The sampling stream is derived from `seed` and the starting step, so a
/// resumed run draws fresh batches.
pub fn train_cyclegan<T: Scalar>(
    model: &mut CycleGanModel<T>,
    optim: &mut CycleGanOptim<T>,
    domain_a: &[Image<T>],
    domain_b: &[Image<T>],
    cfg: &CycleGanTrainConfig,
    mut on_step: impl FnMut(&LossBreakdown),
) -> Result<Vec<LossBreakdown>, CycleGanError> {
    if domain_a.is_empty() || domain_b.is_empty() {
        return Err(CycleGanError::EmptyDomain);
    }
    if cfg.batch_size == 0 {
        return Err(CycleGanError::Spec("batch_size must be positive".into()));
    }
    let schedule = LinearDecay::halfway(cfg.learning_rate, cfg.total_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ model.step.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut history = Vec::new();
    while model.step < cfg.total_steps {
        let a = sample_batch(domain_a, cfg.batch_size, &mut rng)?;
        let b = sample_batch(domain_b, cfg.batch_size, &mut rng)?;
        let lr = schedule.rate(model.step);
        let losses = model.train_step(optim, &a, &b, &cfg.weights, lr, &mut rng)?;
        on_step(&losses);
        history.push(losses);
    }
    Ok(history)
}
