//! The learned trajectory-wise metric: a stacked GRU over per-step feature
//! vectors with an MLP head, its training loop and checkpoint format.

mod checkpoint;
mod model;
mod train;

use std::sync::Arc;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC};
pub use model::{ModelParams, ModelShape, TensorSpec, LEAKY_SLOPE};
pub use train::{
    evaluate, loss_and_gradients, predict_all, split_dataset, train, EpochLog, Metrics, Optimizer, Split, TrainConfig, TrainEvent,
    TrainOutcome,
};

use crate::features::InputVector;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("feature layout mismatch: checkpoint has {found}, features are {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One training target: a rater's score for a trajectory under a context.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Trajectory id; splits never separate samples sharing it.
    pub group: String,
    pub inputs: Arc<Vec<InputVector>>,
    pub target: f64,
}
