//! Unpaired two-domain translation (normal as domain A, covid as domain B)
//! used to synthesize opposite-class training slices.

mod buffer;
mod generate;
mod losses;
mod model;
mod networks;
mod train;

use thiserror::Error;

pub use buffer::ReplayBuffer;
pub use generate::{direction_for, generate_augmented_set, generated_count};
pub use losses::{adversarial_loss, cycle_loss, identity_loss, CycleGanLossWeights};
pub use model::{
    CycleGanModel, CycleGanOptim, Direction, GeneratorTerms, LinearDecay, LossBreakdown, CHECKPOINT_HEADER,
};
pub use networks::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec};
pub use train::{from_generator_range, to_generator_range, train_cyclegan, CycleGanTrainConfig};

#[derive(Debug, Error)]
pub enum CycleGanError {
    #[error("invalid configuration: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {term} loss at step {step}")]
    NonFiniteLoss { term: String, step: u64 },
    #[error("both domains need at least one image")]
    EmptyDomain,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("cache write failed: {0}")]
    Io(String),
    #[error("cannot load source slice: {0}")]
    Load(String),
}
