//! Numeric substrate: tensors, a reverse-mode tape, a gated recurrent
//! cell and a finite-difference gradient checker.

mod gradcheck;
mod lstm;
mod params;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{analytic_grad, grad_check, GradCheckReport};
pub use lstm::LstmCell;
pub use params::{Component, Gradients, ParamEntry, ParamId, ParamStore};
pub use real::{Precision, Real};
pub use tape::{sigmoid, softmax_in_place, Tape, Var};
pub use tensor::Tensor;
