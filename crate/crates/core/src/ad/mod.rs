//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod backend;
mod ops;
mod tape;
mod tensor;

pub use backend::{Backend, Eager};
pub use ops::{descending_permutation, eval, Op};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
