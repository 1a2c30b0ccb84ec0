//! Value-semantic tensors, layer kernels and reverse-mode differentiation.

pub mod ops;
mod rng;
mod tape;
mod tensor;

pub use rng::Rng;
pub use tape::{finite_diff_gradient, Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
