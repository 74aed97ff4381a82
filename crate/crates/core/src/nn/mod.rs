//! Fixed-topology multilayer perceptrons with hand-written reverse-mode
//! gradients, Adam, Polyak target blending and a versioned binary checkpoint
//! format.

mod adam;
mod checkpoint;
mod dense;
mod matrix;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError, Entry};
pub use dense::{sigmoid, soft_update, softplus, Activation, DenseNet, Gradients, LayerSpec, Tape};
pub use matrix::Matrix;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("architecture mismatch: expected {expected}, found {found}")]
    Architecture { expected: String, found: String },
    #[error("activation tape does not belong to the current network parameters")]
    StaleTape,
    #[error("non-finite gradient at parameter {index}; update rejected")]
    NonFiniteGradient { index: usize },
    #[error("soft-update rate {0} outside (0, 1]")]
    BadTau(f64),
}
