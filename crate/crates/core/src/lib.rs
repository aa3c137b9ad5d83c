//! Kolmogorov–Arnold graph neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: a small define-by-run reverse-mode autodiff engine over
//!   dense row-major matrices, plus a finite-difference gradient checker.
//! - [`basis`]: B-spline (Cox–de Boor) and Gaussian RBF basis families with
//!   learnable control-point positions.
//! - [`kand`]: the KAND block, `LN ∘ Φ ∘ φ̃` with an optional SiLU base branch.
//! - [`graph`]: graph containers, loaders, synthetic generators, edge splits
//!   and the Dirichlet energy.
//! - [`model`]: the KANGConv operator and task-level models.
//! - [`train`]: AdamW, training loops with early stopping, metrics and the
//!   experiment drivers (ablations, oversmoothing, scaling).
//! - [`cli`]: the `kang` command line front-end.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod basis;
pub mod cli;
pub mod diffcore;
pub mod error;
pub mod graph;
pub mod kand;
pub mod model;
pub mod train;

pub use error::{Error, Result};
