use super::TrainError;
use crate::tensor::Tensor;

/// Mean squared error and its gradient `(2/n)(pred - target)`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), TrainError> {
    let n = pred.numel();
    if n != target.numel() {
        return Err(TrainError::LengthMismatch {
            pred: n,
            target: target.numel(),
        });
    }
    if n == 0 {
        return Err(TrainError::TooFewSamples { needed: 1, got: 0 });
    }
    let resid: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let k = 2.0 / n as f64;
    let grad = Tensor::from_vec(pred.dims(), resid.into_iter().map(|r| k * r).collect())?;
    Ok((loss, grad))
}
