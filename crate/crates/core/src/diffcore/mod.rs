//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Tape`] is rebuilt for every forward pass. Parameters live in a
//! [`ParamStore`] and are attached to the tape through a [`Session`].

mod gradcheck;
mod param;
mod tape;

pub use gradcheck::{check_params, finite_difference_check};
pub use param::{Mat, Param, ParamId, ParamStore, Session};
pub use tape::{CustomOp, DTensor, Gradients, Tape};

/// Epsilon used by every layer norm in the crate.
pub const LN_EPS: f64 = 1e-5;
