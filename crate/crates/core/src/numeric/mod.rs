//! Deterministic numeric substrate: dense tensors, a reverse-mode tape,
//! finite-difference gradient checking and the Adam optimizer.

pub mod adam;
pub mod gradcheck;
pub mod linalg;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use gradcheck::{grad_check, GRAD_CHECK_EPS};
pub use linalg::circular_correlation;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ParamStore, Tensor};
