//! Tape-based reverse-mode automatic differentiation over dense tensors.

mod gradcheck;
mod lstm;
mod nn;
mod ops;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use nn::{BatchStats, BnMode, BN_EPS};
pub use real::{gemm, Real};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
