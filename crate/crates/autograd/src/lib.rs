//! Reverse-mode differentiation over an explicit operation tape.
//!
//! The engine is generic over [`Scalar`] so the same graph code runs in `f32`
//! for training and in `f64` for finite-difference verification
//! ([`gradcheck::grad_check`]).

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod loss;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod verify;

pub use adam::{Adam, AdamConfig};
pub use error::{AutogradError, Result};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use params::{uniform_fan_in, BufferId, ParamId, ParamStore};
pub use scalar::{DType, Scalar};
pub use tape::{BatchNormConfig, CustomOp, Gradients, Segments, Tape, Var};
pub use tensor::Tensor;
