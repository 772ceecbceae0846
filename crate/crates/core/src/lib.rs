//! Sparse-view radiance field training with physics-guided constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffmath`]: a small reverse-mode AD tape over dense row-major buffers
//!   plus the Adam optimizer.
//! * [`field`]: the dual-scale encoder and two-branch MLP mapping
//!   `(position, view direction)` to `(density, color)`.
//! * [`render`]: pinhole cameras, ray sampling and differentiable
//!   emission-absorption compositing.
//! * [`constraints`]: the reconstruction loss, the four auxiliary losses and
//!   the progressive weighting schedule.
//! * [`data`]: NeRF-synthetic ingestion, PFM depth priors and a procedural
//!   toy scene with analytic ground truth.
//! * [`train`]: the training loop, evaluation, ablation driver and logging.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod data;
pub mod diffmath;
pub mod error;
pub mod field;
pub mod render;
pub mod train;

pub use error::{Error, Result};
