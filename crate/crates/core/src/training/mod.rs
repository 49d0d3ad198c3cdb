//! Loss, metrics, optimizers and the mini-batch training loop.

mod loss;
mod metrics;
mod optim;
mod trainer;

use thiserror::Error;

use crate::datapipe::DataError;
use crate::tensor::TensorError;
use crate::zoo::ModelError;

pub use loss::mse_loss;
pub use metrics::{metrics, EvalReport};
pub use optim::{adam_step, clip_global_norm, sgd_step, OptimizerKind, OptimizerState};
pub use trainer::{evaluate, predict, train, EpochRecord, TrainConfig, TrainHistory};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("length mismatch: {pred} predictions vs {target} targets")]
    LengthMismatch { pred: usize, target: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("target has zero variance")]
    DegenerateTarget,
    #[error("parameter {index}: shape {param:?} vs gradient {grad:?}")]
    ParamShape {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("network expects samples {expected:?}, dataset has {got:?}")]
    DataShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
