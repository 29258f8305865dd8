//! Parametric charting: a small fully-connected network trained with a
//! timestamp-mined triplet loss and an optional anchor (semi-supervised)
//! term, on top of a minimal reverse-mode gradient engine.

mod mlp;
pub mod tape;
mod train;
mod triplet;

use thiserror::Error;

use crate::features::FeatureError;

pub use mlp::{forward, Activation, DenseLayer, MlpModel};
pub use train::{
    chart_from_model, loss_and_gradient, train, AnchorSet, ModelConfig, Optimizer, ParamGradients, TrainConfig,
    TrainingOutcome,
};
pub use triplet::{mine_triplets, triplet_loss, Triplet, TripletMiningConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("input dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient temporal diversity: {0}")]
    InsufficientTemporalDiversity(String),
    #[error("training diverged (non-finite loss or parameters) in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("anchor weight is positive but the anchor set is empty")]
    EmptyAnchorSet,
    #[error("anchor sample {0} is not in the training set")]
    UnknownAnchor(u64),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}
