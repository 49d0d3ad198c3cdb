use super::{check_grad_shape, ForwardCache, LayerError};
use crate::tensor::Tensor;

/// Non-overlapping max pooling along the step axis of `[batch, steps, ch]`.
/// A trailing remainder shorter than `pool` is dropped.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub(crate) pool: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_dims: Vec<usize>,
    out_dims: Vec<usize>,
    /// Flat input index of the winning entry for each output entry.
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(pool: usize) -> Result<Self, LayerError> {
        if pool == 0 {
            return Err(LayerError::InvalidSpec("pool size must be >= 1".into()));
        }
        Ok(MaxPool1d { pool })
    }

    pub fn pool(&self) -> usize {
        self.pool
    }

    pub(crate) fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        let &[steps, ch] = input else {
            return Err(LayerError::ShapeMismatch {
                layer: "maxpool1d",
                expected: "[steps, channels]".into(),
                got: input.to_vec(),
            });
        };
        if steps < self.pool {
            return Err(LayerError::WindowTooShort {
                layer: "maxpool1d",
                steps,
                needed: self.pool,
            });
        }
        Ok(vec![steps / self.pool, ch])
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims();
        if dims.len() != 3 {
            return Err(LayerError::ShapeMismatch {
                layer: "maxpool1d",
                expected: "[batch, steps, channels]".into(),
                got: dims.to_vec(),
            });
        }
        let (batch, steps) = (dims[0], dims[1]);
        let out = self.output_dims(&dims[1..])?;
        let (out_steps, ch) = (out[0], out[1]);

        let mut y = Tensor::zeros_dims(&[batch, out_steps, ch]);
        let mut argmax = vec![0usize; batch * out_steps * ch];
        let xd = x.data();
        for b in 0..batch {
            for t in 0..out_steps {
                for c in 0..ch {
                    let mut best = (b * steps + t * self.pool) * ch + c;
                    for dt in 1..self.pool {
                        let idx = (b * steps + t * self.pool + dt) * ch + c;
                        // strict comparison keeps the lowest index on ties
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    let o = (b * out_steps + t) * ch + c;
                    y.data_mut()[o] = xd[best];
                    argmax[o] = best;
                }
            }
        }
        let out_dims = y.dims().to_vec();
        Ok((
            y,
            ForwardCache::MaxPool1d(PoolCache {
                input_dims: dims.to_vec(),
                out_dims,
                argmax,
            }),
        ))
    }

    pub(crate) fn backward(&self, grad_out: &Tensor, cache: &PoolCache) -> Result<Tensor, LayerError> {
        check_grad_shape("maxpool1d", grad_out, &cache.out_dims)?;
        let mut gx = Tensor::zeros_dims(&cache.input_dims);
        for (&src, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gx.data_mut()[src] += g;
        }
        Ok(gx)
    }
}
