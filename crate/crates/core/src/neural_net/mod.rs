//! Feed-forward networks with analytic backpropagation, plus Adam and BFGS optimisers.

mod mlp;
mod optim;

pub use mlp::{init_glorot, parameter_count, Activation, ForwardCache, Mlp};
pub use optim::{bfgs_minimize, Adam, AdamConfig, BfgsConfig, BfgsReport, StopReason};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("forward cache does not match the network")]
    Cache,
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { iteration: usize, what: String },
}
