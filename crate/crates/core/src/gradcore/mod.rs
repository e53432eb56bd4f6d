//! Minimal reverse-mode automatic differentiation over dense matrices, plus the
//! Adam optimizer used to train networks built on it.

mod adam;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use tape::{per_sample_jacobian, Gradients, NodeId, Tape};
