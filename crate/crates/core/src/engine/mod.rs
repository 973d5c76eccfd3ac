//! Minimal reverse-mode automatic differentiation over `f64` tensors.

mod conv;
pub mod gradcheck;
mod graph;
pub mod layers;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport, TensorCheck};
pub use graph::{sigmoid, BackwardFault, Graph, SmoothL1Variant, Var};
pub use layers::{activate, residual_unit, Activation};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
