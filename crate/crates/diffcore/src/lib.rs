//! Minimal differentiable-computation substrate.
//!
//! Dense [`Tensor`]s, an append-only [`Graph`] with reverse-mode gradients
//! for a fixed operation set, a named [`ParamStore`], bias-corrected Adam and
//! a central finite-difference checker. Everything is generic over [`Real`]
//! so the same code runs in `f64` for verification and `f32` for training.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod real;
pub mod store;
pub mod tensor;

pub use error::{DiffError, Result};
pub use gradcheck::{fd_check, fd_check_with, relative_error, FdEntry, FdOptions, FdReport};
pub use graph::{Gradients, Graph, OpKind, Var};
pub use optim::{adam_step, AdamConfig};
pub use real::Real;
pub use store::{ParamEntry, ParamStore};
pub use tensor::Tensor;
