//! Classical network engine for generated weights.
//!
//! Networks are described by a [`ModelSpec`] and evaluated against a flat
//! parameter vector supplied by the caller, so the same code serves a model
//! whose weights come from an optimizer and one whose weights are produced by
//! another model.

pub mod loss;
pub mod network;
pub mod optim;
pub mod par;
pub mod spec;
pub mod weights;

pub use loss::{evaluate, loss_and_grad, softmax_cross_entropy, Batch, Evaluation};
pub use network::ForwardTape;
pub use optim::{Adam, AdamConfig};
pub use spec::{Layer, LayerParams, ModelPreset, ModelSpec, Shape};

/// Errors raised by the network engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
