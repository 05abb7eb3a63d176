//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::finite_diff_check;
pub use ops::{forward_op, Op};
pub use tape::{Eager, Gradients, Graph, Tape, Var};
pub use tensor::Tensor;
