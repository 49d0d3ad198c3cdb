use serde::{Deserialize, Serialize};

use super::{ModelError, Network};
use crate::layers::{Activation, ConvSpec, Layer, LayerSpec, LstmSpec, MaxPool1d};
use crate::tensor::RngState;

/// Hyperparameters of the CNN-LSTM stack:
///
/// ```text
/// TimeDistributed[conv(c0) -> pool -> conv(c1) -> pool -> conv(c2) -> flatten]
///   -> BiLSTM(units, sequences) -> dropout -> BiLSTM(units, last) -> dropout -> dense(1)
/// ```
///
/// With the defaults (window 100 as 4 x 25) the per-subsequence trace is
/// 25 -> 23 -> 11 -> 9 -> 4 -> 2, giving 2 * 64 = 128 features per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnLstmConfig {
    pub window: usize,
    pub outer_steps: usize,
    pub conv_channels: [usize; 3],
    pub kernel_size: usize,
    pub pool: usize,
    pub lstm_units: usize,
    pub dropout: f64,
}

impl Default for CnnLstmConfig {
    fn default() -> Self {
        CnnLstmConfig {
            window: 100,
            outer_steps: 4,
            conv_channels: [64, 128, 64],
            kernel_size: 3,
            pool: 2,
            lstm_units: 100,
            dropout: 0.5,
        }
    }
}

impl CnnLstmConfig {
    pub fn inner_steps(&self) -> usize {
        self.window / self.outer_steps
    }

    fn conv_stack(&self) -> Vec<LayerSpec> {
        let [c0, c1, c2] = self.conv_channels;
        let conv = |i, o| {
            LayerSpec::Conv1d(ConvSpec {
                in_channels: i,
                out_channels: o,
                kernel_size: self.kernel_size,
                activation: Activation::Relu,
            })
        };
        let pool = LayerSpec::MaxPool1d { pool: self.pool };
        vec![conv(1, c0), pool.clone(), conv(c0, c1), pool, conv(c1, c2), LayerSpec::Flatten]
    }

    /// Per-subsequence step counts through the conv stack, or `None` if the
    /// subsequence is too short to survive it.
    fn conv_trace(&self, inner: usize) -> Option<Vec<usize>> {
        let mut steps = inner;
        let mut trace = vec![steps];
        for _ in 0..2 {
            steps = steps.checked_sub(self.kernel_size - 1).filter(|&s| s >= 1)?;
            trace.push(steps);
            steps /= self.pool;
            if steps == 0 {
                return None;
            }
            trace.push(steps);
        }
        steps = steps.checked_sub(self.kernel_size - 1).filter(|&s| s >= 1)?;
        trace.push(steps);
        Some(trace)
    }

    /// Smallest subsequence length the conv stack accepts.
    pub fn min_inner_steps(&self) -> usize {
        (1..).find(|&l| self.conv_trace(l).is_some()).unwrap()
    }

    /// Flattened feature width per subsequence.
    pub fn feature_width(&self) -> Option<usize> {
        self.conv_trace(self.inner_steps())
            .map(|t| t.last().unwrap() * self.conv_channels[2])
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.outer_steps == 0 || self.window == 0 || !self.window.is_multiple_of(self.outer_steps) {
            return Err(ModelError::InvalidConfig(format!(
                "window {} must be a positive multiple of outer_steps {}",
                self.window, self.outer_steps
            )));
        }
        if self.kernel_size == 0 || self.pool == 0 || self.lstm_units == 0 || self.conv_channels.contains(&0) {
            return Err(ModelError::InvalidConfig(format!("{self:?}")));
        }
        if self.feature_width().is_none() {
            return Err(ModelError::ShapeSurvival {
                inner_steps: self.inner_steps(),
                minimum: self.min_inner_steps(),
            });
        }
        MaxPool1d::new(self.pool).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn specs(&self) -> Result<(Vec<usize>, Vec<LayerSpec>), ModelError> {
        self.validate()?;
        let features = self.feature_width().unwrap();
        let units = self.lstm_units;
        let mut specs: Vec<LayerSpec> = self
            .conv_stack()
            .into_iter()
            .map(|inner| LayerSpec::TimeDistributed {
                inner: Box::new(inner),
            })
            .collect();
        specs.push(LayerSpec::Lstm(LstmSpec {
            input_size: features,
            units,
            bidirectional: true,
            return_sequences: true,
        }));
        specs.push(LayerSpec::Dropout { p: self.dropout });
        specs.push(LayerSpec::Lstm(LstmSpec {
            input_size: 2 * units,
            units,
            bidirectional: true,
            return_sequences: false,
        }));
        specs.push(LayerSpec::Dropout { p: self.dropout });
        specs.push(LayerSpec::Dense {
            input_size: 2 * units,
            output_size: 1,
        });
        Ok((vec![self.outer_steps, self.inner_steps(), 1], specs))
    }

    /// Closed-form parameter count of the stack.
    pub fn param_count(&self) -> usize {
        let [c0, c1, c2] = self.conv_channels;
        let k = self.kernel_size;
        let u = self.lstm_units;
        let conv = |i: usize, o: usize| k * i * o + o;
        let lstm = |i: usize| 2 * 4 * (i * u + u * u + u);
        conv(1, c0) + conv(c0, c1) + conv(c1, c2)
            + lstm(self.feature_width().unwrap_or(0))
            + lstm(2 * u)
            + 2 * u
            + 1
    }
}

pub fn build_cnn_lstm(config: &CnnLstmConfig, rng: &mut RngState) -> Result<Network, ModelError> {
    let (input, specs) = config.specs()?;
    Network::from_specs(input, &specs, rng)
}

/// Plain LSTM over the raw `[window, 1]` sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmBaselineConfig {
    pub window: usize,
    pub units: usize,
    pub dropout: f64,
}

impl Default for LstmBaselineConfig {
    fn default() -> Self {
        LstmBaselineConfig {
            window: 100,
            units: 100,
            dropout: 0.5,
        }
    }
}

impl LstmBaselineConfig {
    pub fn specs(&self) -> Result<(Vec<usize>, Vec<LayerSpec>), ModelError> {
        if self.window == 0 || self.units == 0 {
            return Err(ModelError::InvalidConfig(format!("{self:?}")));
        }
        let specs = vec![
            LayerSpec::Lstm(LstmSpec {
                input_size: 1,
                units: self.units,
                bidirectional: false,
                return_sequences: false,
            }),
            LayerSpec::Dropout { p: self.dropout },
            LayerSpec::Dense {
                input_size: self.units,
                output_size: 1,
            },
        ];
        Ok((vec![self.window, 1], specs))
    }

    pub fn param_count(&self) -> usize {
        let u = self.units;
        4 * (u + u * u + u) + u + 1
    }
}

pub fn build_lstm_baseline(config: &LstmBaselineConfig, rng: &mut RngState) -> Result<Network, ModelError> {
    let (input, specs) = config.specs()?;
    Network::from_specs(input, &specs, rng)
}

/// True for a time-distributed convolution.
pub fn is_conv_layer(layer: &Layer) -> bool {
    matches!(layer, Layer::TimeDistributed(td) if matches!(td.inner(), Layer::Conv1d(_)))
}
