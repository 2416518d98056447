//! Dense `f64` tensors with a small reverse-mode autodiff tape, an Adam
//! optimizer and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, gradient_check_with_fault, GradCheckReport};
pub use tape::{softmax, softmax_cross_entropy, GradFault, Gradients, Mode, OpKind, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
