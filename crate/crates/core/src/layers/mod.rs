//! Forward/backward layer implementations.
//!
//! Every layer consumes a batch tensor whose axis 0 indexes samples; the
//! remaining axes are the per-sample shape. A conv layer therefore takes
//! `[batch, steps, channels]`, a dense layer `[batch, features]`, and so on.
//! `forward` returns a [`ForwardCache`] that `backward` consumes to produce
//! the input gradient and one gradient tensor per named parameter.

mod conv;
mod dense;
mod dropout;
mod lstm;
mod pool;
mod reshape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{RngState, Shape, Tensor, TensorError};

pub use conv::{Activation, Conv1d, ConvSpec};
pub use dense::Dense;
pub use dropout::Dropout;
pub use lstm::{Lstm, LstmSpec};
pub use pool::MaxPool1d;
pub use reshape::{Flatten, TimeDistributed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("{layer}: expected input {expected}, got {got:?}")]
    ShapeMismatch {
        layer: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("{layer}: sequence of {steps} steps is shorter than the window {needed}")]
    WindowTooShort {
        layer: &'static str,
        steps: usize,
        needed: usize,
    },
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("{layer}: cache does not belong to this forward pass ({detail})")]
    CacheMismatch { layer: &'static str, detail: String },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("parameter `{name}`: {detail}")]
    Parameter { name: String, detail: String },
    #[error("time-distributed slice {index}: {source}")]
    Slice {
        index: usize,
        #[source]
        source: Box<LayerError>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Named trainable tensors of one layer, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerParams {
    entries: Vec<(String, Tensor)>,
}

impl LayerParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), LayerError> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(LayerError::Parameter {
                name,
                detail: "duplicate name".into(),
            });
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub(crate) fn expect(&self, name: &str) -> &Tensor {
        self.get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn into_tensors(self) -> impl Iterator<Item = Tensor> {
        self.entries.into_iter().map(|(_, t)| t)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zeros_like(&self) -> LayerParams {
        LayerParams {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Checks that `other` names the same tensors with the same shapes.
    pub fn check_congruent(&self, other: &LayerParams) -> Result<(), LayerError> {
        if self.len() != other.len() {
            return Err(LayerError::Parameter {
                name: "*".into(),
                detail: format!("expected {} tensors, got {}", self.len(), other.len()),
            });
        }
        for ((n1, t1), (n2, t2)) in self.entries.iter().zip(&other.entries) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(LayerError::Parameter {
                    name: n1.clone(),
                    detail: format!("expected {:?}, got `{n2}` {:?}", t1.dims(), t2.dims()),
                });
            }
        }
        Ok(())
    }
}

/// Intermediates recorded by `forward` for use in `backward`.
#[derive(Debug, Clone)]
pub enum ForwardCache {
    Conv1d(conv::ConvCache),
    MaxPool1d(pool::PoolCache),
    Flatten { input_dims: Vec<usize> },
    TimeDistributed(Box<reshape::TimeDistributedCache>),
    Dense(dense::DenseCache),
    Dropout(dropout::DropoutCache),
    Lstm(Box<lstm::LstmCache>),
}

/// Architecture descriptor of one layer; enough to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d(ConvSpec),
    MaxPool1d { pool: usize },
    Flatten,
    TimeDistributed { inner: Box<LayerSpec> },
    Dense { input_size: usize, output_size: usize },
    Dropout { p: f64 },
    Lstm(LstmSpec),
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    Flatten(Flatten),
    TimeDistributed(TimeDistributed),
    Dense(Dense),
    Dropout(Dropout),
    Lstm(Lstm),
}

impl Layer {
    /// Builds a layer with freshly initialized parameters.
    pub fn init(spec: &LayerSpec, rng: &mut RngState) -> Result<Layer, LayerError> {
        Ok(match spec {
            LayerSpec::Conv1d(s) => Layer::Conv1d(Conv1d::new(s.clone(), rng)?),
            LayerSpec::MaxPool1d { pool } => Layer::MaxPool1d(MaxPool1d::new(*pool)?),
            LayerSpec::Flatten => Layer::Flatten(Flatten),
            LayerSpec::TimeDistributed { inner } => {
                Layer::TimeDistributed(TimeDistributed::new(Layer::init(inner, rng)?))
            }
            LayerSpec::Dense {
                input_size,
                output_size,
            } => Layer::Dense(Dense::new(*input_size, *output_size, rng)?),
            LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(*p)?),
            LayerSpec::Lstm(s) => Layer::Lstm(Lstm::new(s.clone(), rng)?),
        })
    }

    /// Builds a layer around existing parameters, validating names and shapes.
    pub fn with_params(spec: &LayerSpec, params: LayerParams) -> Result<Layer, LayerError> {
        let mut layer = Layer::init(spec, &mut RngState::new(0))?;
        layer.params().check_congruent(&params)?;
        layer.set_params(params);
        Ok(layer)
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv1d(l) => LayerSpec::Conv1d(l.spec.clone()),
            Layer::MaxPool1d(l) => LayerSpec::MaxPool1d { pool: l.pool },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::TimeDistributed(l) => LayerSpec::TimeDistributed {
                inner: Box::new(l.inner.spec()),
            },
            Layer::Dense(l) => LayerSpec::Dense {
                input_size: l.input_size(),
                output_size: l.output_size(),
            },
            Layer::Dropout(l) => LayerSpec::Dropout { p: l.p },
            Layer::Lstm(l) => LayerSpec::Lstm(l.spec.clone()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::Flatten(_) => "flatten",
            Layer::TimeDistributed(_) => "time_distributed",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
            Layer::Lstm(_) => "lstm",
        }
    }

    pub fn params(&self) -> &LayerParams {
        static EMPTY: LayerParams = LayerParams {
            entries: Vec::new(),
        };
        match self {
            Layer::Conv1d(l) => &l.params,
            Layer::Dense(l) => &l.params,
            Layer::Lstm(l) => &l.params,
            Layer::TimeDistributed(l) => l.inner.params(),
            Layer::MaxPool1d(_) | Layer::Flatten(_) | Layer::Dropout(_) => &EMPTY,
        }
    }

    pub fn params_mut(&mut self) -> Option<&mut LayerParams> {
        match self {
            Layer::Conv1d(l) => Some(&mut l.params),
            Layer::Dense(l) => Some(&mut l.params),
            Layer::Lstm(l) => Some(&mut l.params),
            Layer::TimeDistributed(l) => l.inner.params_mut(),
            Layer::MaxPool1d(_) | Layer::Flatten(_) | Layer::Dropout(_) => None,
        }
    }

    fn set_params(&mut self, params: LayerParams) {
        if let Some(p) = self.params_mut() {
            *p = params;
        }
    }

    /// Per-sample output dimensions for per-sample input `input`.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        match self {
            Layer::Conv1d(l) => l.output_dims(input),
            Layer::MaxPool1d(l) => l.output_dims(input),
            Layer::Flatten(_) => Flatten::output_dims(input),
            Layer::TimeDistributed(l) => l.output_dims(input),
            Layer::Dense(l) => l.output_dims(input),
            Layer::Dropout(_) => Ok(input.to_vec()),
            Layer::Lstm(l) => l.output_dims(input),
        }
    }

    pub fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Tensor, ForwardCache), LayerError> {
        match self {
            Layer::Conv1d(l) => l.forward(x),
            Layer::MaxPool1d(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::TimeDistributed(l) => l.forward(x, mode, rng),
            Layer::Dense(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode, rng),
            Layer::Lstm(l) => l.forward(x),
        }
    }

    pub fn backward(
        &self,
        grad_out: &Tensor,
        cache: &ForwardCache,
    ) -> Result<(Tensor, LayerParams), LayerError> {
        match (self, cache) {
            (Layer::Conv1d(l), ForwardCache::Conv1d(c)) => l.backward(grad_out, c),
            (Layer::MaxPool1d(l), ForwardCache::MaxPool1d(c)) => {
                Ok((l.backward(grad_out, c)?, LayerParams::new()))
            }
            (Layer::Flatten(_), ForwardCache::Flatten { input_dims }) => {
                Ok((Flatten::backward(grad_out, input_dims)?, LayerParams::new()))
            }
            (Layer::TimeDistributed(l), ForwardCache::TimeDistributed(c)) => {
                l.backward(grad_out, c)
            }
            (Layer::Dense(l), ForwardCache::Dense(c)) => l.backward(grad_out, c),
            (Layer::Dropout(l), ForwardCache::Dropout(c)) => {
                Ok((l.backward(grad_out, c)?, LayerParams::new()))
            }
            (Layer::Lstm(l), ForwardCache::Lstm(c)) => l.backward(grad_out, c),
            (layer, _) => Err(LayerError::CacheMismatch {
                layer: layer.name(),
                detail: "cache was produced by a different layer kind".into(),
            }),
        }
    }
}

/// Uniform Glorot initialization over `dims` with the given fans.
pub(crate) fn glorot(
    dims: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngState,
) -> Result<Tensor, LayerError> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Ok(Tensor::random_uniform(
        &Shape::new(dims.to_vec())?,
        -limit,
        limit,
        rng,
    )?)
}

pub(crate) fn check_grad_shape(
    layer: &'static str,
    grad_out: &Tensor,
    expected: &[usize],
) -> Result<(), LayerError> {
    if grad_out.dims() != expected {
        return Err(LayerError::CacheMismatch {
            layer,
            detail: format!("gradient {:?} vs output {:?}", grad_out.dims(), expected),
        });
    }
    Ok(())
}
