//! The multi-set convolutional network.
//!
//! Each of the three feature sets goes through its own two-layer ReLU MLP
//! (weights shared across set elements) and is mean-pooled over its real
//! elements. The pooled vectors are concatenated and fed to a ReLU layer
//! and a sigmoid output unit, so predictions live in `(0, 1)` like the
//! normalized labels.
//!
//! Gradients are derived by hand for this fixed architecture. The network
//! is generic over the float type: `f32` for training and inference, `f64`
//! for gradient checks.

mod batch;
mod metrics;
mod network;
mod params;
mod train;

pub use batch::{Batch, SetBatch};
pub use metrics::{quantile_sorted, QErrorSummary};
pub use network::{forward, loss, loss_and_grads, qerror, set_module_forward, Forward, LossKind, LossSpec};
pub use params::{Dense, MscnParams, MscnShape, SetModule};
pub use train::{evaluate, predict_normalized, train, Adam, EpochRecord, TrainConfig, TrainEvent, TrainReport};

use thiserror::Error;

use crate::featurizer::{EncodingVocabulary, FeaturizedQuery};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MscnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training cancelled")]
    Cancelled,
}

/// Float types the network runs on.
pub trait Real:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + num_traits::FromPrimitive
    + std::fmt::Debug
    + std::ops::AddAssign
    + Send
    + Sync
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Estimated cardinality of one featurized query.
pub fn predict<F: Real>(
    params: &MscnParams<F>,
    vocab: &EncodingVocabulary,
    query: &FeaturizedQuery,
) -> Result<f64, MscnError> {
    let y = predict_normalized(params, &vocab.dims(), &[query])?[0];
    Ok(vocab.denormalize_label(y))
}
