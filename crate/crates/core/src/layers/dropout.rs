use super::{check_grad_shape, ForwardCache, LayerError, Mode};
use crate::tensor::{RngState, Tensor};

/// Inverted dropout: survivors are scaled by `1/(1-p)` at train time so that
/// inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub(crate) p: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    dims: Vec<usize>,
    /// Per-entry multiplier (0 or 1/(1-p)); `None` when the pass was an identity.
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self, LayerError> {
        if !(0.0..1.0).contains(&p) {
            return Err(LayerError::InvalidProbability(p));
        }
        Ok(Dropout { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub(crate) fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims().to_vec();
        if mode == Mode::Infer || self.p == 0.0 {
            return Ok((x.clone(), ForwardCache::Dropout(DropoutCache { dims, mask: None })));
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.next_f64() < self.p { 0.0 } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Ok((y, ForwardCache::Dropout(DropoutCache { dims, mask: Some(mask) })))
    }

    pub(crate) fn backward(&self, grad_out: &Tensor, cache: &DropoutCache) -> Result<Tensor, LayerError> {
        check_grad_shape("dropout", grad_out, &cache.dims)?;
        let mut g = grad_out.clone();
        if let Some(mask) = &cache.mask {
            for (v, m) in g.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Ok(g)
    }
}
