//! Network container, reference architectures and model persistence.

mod builders;
mod network;
mod persist;

use thiserror::Error;

use crate::layers::LayerError;

pub use builders::{build_cnn_lstm, build_lstm_baseline, is_conv_layer, CnnLstmConfig, LstmBaselineConfig};
pub use network::{flatten_grads, Network};
pub use persist::{load, read_manifest, save, Architecture, ModelManifest, ModelMeta, ParamEntry, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer {index} does not fit the preceding output: {source}")]
    Compose {
        index: usize,
        #[source]
        source: LayerError,
    },
    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: LayerError,
    },
    #[error("input batch must be [n, {expected:?}], got {got:?}")]
    Input { expected: Vec<usize>, got: Vec<usize> },
    #[error("expected {expected} forward caches, got {got}")]
    CacheCount { expected: usize, got: usize },
    #[error("subsequence length {inner_steps} does not survive the conv stack (minimum {minimum})")]
    ShapeSurvival { inner_steps: usize, minimum: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("unsupported model format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("corrupt parameter payload: {0}")]
    CorruptPayload(String),
}
