//! Small fully-connected classifier trained with momentum SGD, and the batch
//! pipeline that routes its weights through the transfer boundary.

mod network;
pub mod reduce;
mod sgd;
mod train;

use thiserror::Error;

use crate::awp::AwpError;
use crate::transfer::TransferError;

pub use network::{Dense, ForwardPass, GradientSet, LayerGradient, Network};
pub use sgd::{gather_and_update, Sgd, SgdConfig};
pub use train::{evaluate, EpochStats, PrecisionPolicy, Trainer, TrainerOptions};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no gradient contributions with samples")]
    EmptyGradient,
    #[error("layer {layer} has non-finite parameters after update {step}")]
    NonFinite { layer: usize, step: u64 },
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Awp(#[from] AwpError),
}
