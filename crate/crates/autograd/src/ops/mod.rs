mod conv;
mod elementwise;
mod loss;
mod matmul;
mod norm;
mod reduce;
mod shape;

pub use conv::{conv_out_dim, ConvGeom};
pub use matmul::softmax_rows;
pub use shape::concat;
