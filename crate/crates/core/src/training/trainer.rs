use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{clip_global_norm, metrics, mse_loss, EvalReport, OptimizerState, TrainError};
use crate::datapipe::WindowedDataset;
use crate::layers::Mode;
use crate::tensor::{RngState, Tensor};
use crate::zoo::{flatten_grads, Network};

const PREDICT_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Trailing fraction of the training samples held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Global L2 norm cap on each step's gradients.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 50,
            validation_fraction: 0.1,
            seed: 0,
            shuffle_each_epoch: true,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(TrainError::InvalidConfig("clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// `(training, validation)` sample counts for a dataset of `n`.
    pub fn partition(&self, n: usize) -> Result<(usize, usize), TrainError> {
        let n_val = ((self.validation_fraction * n as f64).floor() as usize).max(1);
        if n < 2 || n_val >= n {
            return Err(TrainError::TooFewSamples { needed: 2, got: n });
        }
        Ok((n - n_val, n_val))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_mae: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,train_mae,val_mae\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.train_mae, r.val_mae);
        }
        s
    }
}

/// Dataset inputs shaped for `net`. Samples whose element count matches the
/// network input are reinterpreted, so the `[outer, inner, 1]` windows also
/// feed a plain `[window, 1]` sequence model.
fn shaped_inputs(net: &Network, data: &WindowedDataset) -> Result<Tensor, TrainError> {
    let want = net.input_dims();
    let have = data.sample_dims();
    if have == want {
        return Ok(data.inputs().clone());
    }
    if have.iter().product::<usize>() != want.iter().product::<usize>() {
        return Err(TrainError::DataShape {
            expected: want.to_vec(),
            got: have.to_vec(),
        });
    }
    let mut dims = vec![data.len()];
    dims.extend_from_slice(want);
    Ok(data.inputs().clone().reshape(dims)?)
}

fn predict_rows(net: &Network, x: &Tensor, rows: &[usize]) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(PREDICT_BATCH) {
        let y = net.predict(&x.gather_rows(chunk)?)?;
        out.extend_from_slice(y.data());
    }
    Ok(out)
}

/// Inference-mode predictions, one per sample, in the dataset's scale.
pub fn predict(net: &Network, data: &WindowedDataset) -> Result<Vec<f64>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::TooFewSamples { needed: 1, got: 0 });
    }
    let x = shaped_inputs(net, data)?;
    predict_rows(net, &x, &(0..data.len()).collect::<Vec<_>>())
}

pub fn evaluate(net: &Network, data: &WindowedDataset) -> Result<EvalReport, TrainError> {
    metrics(&predict(net, data)?, data.targets().data())
}

fn mse_mae(pred: &[f64], target: &[f64]) -> (f64, f64) {
    let n = pred.len() as f64;
    let (sq, ab) = pred
        .iter()
        .zip(target)
        .fold((0.0, 0.0), |(s, a), (p, t)| (s + (p - t) * (p - t), a + (p - t).abs()));
    (sq / n, ab / n)
}

/// Mini-batch training. The trailing `validation_fraction` of `data` is held
/// out before the first epoch and only ever evaluated in inference mode.
/// Shuffling and dropout draw from one stream seeded by `cfg.seed`, so a
/// run is fully determined by the seed, data, config and initial network.
pub fn train(
    net: &mut Network,
    data: &WindowedDataset,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    let (n_train, _) = cfg.partition(data.len())?;
    let x = shaped_inputs(net, data)?;
    let targets = data.targets();
    let val_rows: Vec<usize> = (n_train..data.len()).collect();
    let val_targets = targets.gather_rows(&val_rows)?;

    let mut rng = RngState::with_stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            rng.shuffle(&mut order);
        }
        let (mut sq_sum, mut abs_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.gather_rows(batch)?;
            let tb = targets.gather_rows(batch)?;
            let (y, caches) = net.forward(&xb, Mode::Train, &mut rng)?;
            let (loss, grad) = mse_loss(&y, &tb)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { epoch });
            }
            let (_, abs) = mse_mae(y.data(), tb.data());
            sq_sum += loss * batch.len() as f64;
            abs_sum += abs * batch.len() as f64;

            let (_, grads) = net.backward(&grad, &caches)?;
            let mut grads = flatten_grads(grads);
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            opt.apply(&mut net.params_mut(), &grads)?;
        }
        let val_pred = predict_rows(net, &x, &val_rows)?;
        let (val_loss, val_mae) = mse_mae(&val_pred, val_targets.data());
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite { epoch });
        }
        let rec = EpochRecord {
            epoch,
            train_loss: sq_sum / n_train as f64,
            val_loss,
            train_mae: abs_sum / n_train as f64,
            val_mae,
        };
        log::info!(
            "epoch {}/{}: loss {:.6} val_loss {:.6} mae {:.6} val_mae {:.6}",
            epoch,
            cfg.epochs,
            rec.train_loss,
            rec.val_loss,
            rec.train_mae,
            rec.val_mae
        );
        history.records.push(rec);
    }
    Ok(history)
}
