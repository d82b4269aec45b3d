//! Minimal feed-forward network engine: dense layers, sigmoid/ReLU/linear
//! activations, binary cross-entropy, backpropagation and SGD with momentum,
//! weight decay, dropout and per-epoch schedules.

mod loss;
mod matrix;
mod network;
mod optim;

pub mod gradcheck;
pub mod snapshot;

use thiserror::Error;

pub use loss::{
    clamp_probability, cross_entropy_gradient, cross_entropy_loss, generator_loss,
    generator_loss_gradient, PROBABILITY_EPSILON,
};
pub use matrix::Matrix;
pub use network::{
    Activation, DenseLayer, ForwardRecord, Gradients, InitSpec, LayerGradient, Mode, Network,
};
pub use optim::{sgd_step, OptimizerConfig, OptimizerState, Schedule};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("snapshot parse error: {0}")]
    Parse(String),
}
