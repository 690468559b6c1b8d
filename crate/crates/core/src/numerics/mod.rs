//! Differentiable tensor core: `f64` tensors, a reverse-mode tape and a
//! finite-difference gradient checker.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{
    analytic_gradients, compare_gradients, grad_check, numeric_gradients, relative_error,
    summarize, GradCheckReport, GradientComparison,
};
pub use tape::{gelu_scalar, softmax_along, Tape, Var};
pub use tensor::Tensor;
