//! Trainable rational activation functions and the machinery to study their
//! stability: a small reverse-mode autodiff engine, MLPs with per-layer
//! rational activations, continual-learning streams, empirical NTK analysis,
//! training diagnostics and a fitted-Q overestimation probe.

pub mod continual;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod gradcore;
pub mod matrix;
pub mod network;
pub mod ntk;
pub mod rational;
pub mod seed;
pub mod tdprobe;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rational::{RationalParams, Variant};
