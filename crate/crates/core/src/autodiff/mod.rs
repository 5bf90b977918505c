//! Reverse-mode automatic differentiation over rank-4 tensors.

pub mod adam;
pub mod functional;
pub mod grad_check;
pub(crate) mod kernels;
pub mod ops;
mod scalar;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use ops::{Activation, Mode, NormKind, NormParams, NormSpec, Reduction};
pub use scalar::Scalar;
pub use tape::{ParamKey, Tape, Var};
pub use tensor::{Dims, Tensor};
