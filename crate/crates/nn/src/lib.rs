//! Minimal neural substrate used by the dispatch and orchestration learners.
//!
//! Everything is `f64`. A [`DenseNet`] stores its parameters in one flat
//! vector so that optimizers and checkpoints can treat it as a plain slice;
//! [`DenseNet::forward`] returns a [`ForwardCache`] that
//! [`DenseNet::backward`] consumes to produce exact gradients.

mod adam;
mod checkpoint;
mod dense;
mod error;
mod ops;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{CheckpointBundle, LayerShape, NetCheckpoint, CHECKPOINT_VERSION};
pub use dense::{Activation, Backward, DenseNet, ForwardCache};
pub use error::NnError;
pub use ops::{log_softmax, logsumexp, softmax};
