//! Scalar-generic dense tensors with tape-based reverse-mode
//! differentiation, the layers built on them, an adaptive-moment optimizer
//! and a versioned checkpoint archive.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); training runs
//! in `f32` while gradient checks use `f64`.

pub mod archive;
mod error;
pub mod graph;
pub mod init;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use archive::Archive;
pub use error::{Error, Result};
pub use graph::{Gradients, Graph, Var};
pub use init::Init;
pub use nn::{Builder, Ctx};
pub use optim::Adam;
pub use params::{Group, Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
