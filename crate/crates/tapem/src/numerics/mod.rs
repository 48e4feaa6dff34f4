//! Numerical substrate: tensors, activations, Adam, a reverse-mode tape,
//! and finite-difference gradient verification.

pub mod gradcheck;
pub mod ops;
pub mod store;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, LossFn};
pub use store::{AdamConfig, GradMap, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::{Shape, Tensor};
