use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters plus Adam moments, one per parameter tensor.
/// Moments are allocated on the first step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            step_count: 0,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Applies one update of the configured kind.
    pub fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), TrainError> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, grads, self),
            OptimizerKind::Adam => adam_step(params, grads, self),
        }
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

fn check_shapes(params: &[&mut Tensor], grads: &[Tensor]) -> Result<(), TrainError> {
    if params.len() != grads.len() {
        return Err(TrainError::LengthMismatch {
            pred: params.len(),
            target: grads.len(),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(TrainError::ParamShape {
                index: i,
                param: p.dims().to_vec(),
                grad: g.dims().to_vec(),
            });
        }
    }
    Ok(())
}

/// `p <- p - lr * g`.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<(), TrainError> {
    check_shapes(params, grads)?;
    let lr = state.learning_rate;
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Bias-corrected Adam.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<(), TrainError> {
    check_shapes(params, grads)?;
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
        state.v = state.m.clone();
    } else if state.m.len() != grads.len() || state.m.iter().zip(grads).any(|(m, g)| m.shape() != g.shape()) {
        return Err(TrainError::InvalidConfig("optimizer state belongs to different parameters".into()));
    }
    state.step_count += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.learning_rate);
    let t = state.step_count as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..gd.len() {
            md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
            vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
            let m_hat = md[i] / c1;
            let v_hat = vd[i] / c2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::sum_of_squares).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}
