use serde::{Deserialize, Serialize};

use super::{check_grad_shape, glorot, ForwardCache, LayerError, LayerParams};
use crate::tensor::{gemm, MatMut, MatRef, RngState, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub activation: Activation,
}

impl ConvSpec {
    pub fn param_count(&self) -> usize {
        self.kernel_size * self.in_channels * self.out_channels + self.out_channels
    }
}

/// Valid-padding, stride-1 1-D convolution over `[batch, steps, in_channels]`.
///
/// Parameters: `kernel` `[kernel_size, in_channels, out_channels]` and
/// `bias` `[out_channels]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub(crate) spec: ConvSpec,
    pub(crate) params: LayerParams,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Tensor,
    /// Pre-activation output, kept only for relu.
    pre_activation: Option<Tensor>,
    out_dims: Vec<usize>,
}

impl Conv1d {
    pub fn new(spec: ConvSpec, rng: &mut RngState) -> Result<Self, LayerError> {
        if spec.kernel_size == 0 || spec.in_channels == 0 || spec.out_channels == 0 {
            return Err(LayerError::InvalidSpec(format!("{spec:?}")));
        }
        let (k, c, o) = (spec.kernel_size, spec.in_channels, spec.out_channels);
        let mut params = LayerParams::new();
        params.insert("kernel", glorot(&[k, c, o], k * c, k * o, rng)?)?;
        params.insert("bias", Tensor::zeros_dims(&[o]))?;
        Ok(Conv1d { spec, params })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub(crate) fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        let &[steps, ch] = input else {
            return Err(self.shape_error(input));
        };
        if ch != self.spec.in_channels {
            return Err(self.shape_error(input));
        }
        if steps < self.spec.kernel_size {
            return Err(LayerError::WindowTooShort {
                layer: "conv1d",
                steps,
                needed: self.spec.kernel_size,
            });
        }
        Ok(vec![steps - self.spec.kernel_size + 1, self.spec.out_channels])
    }

    fn shape_error(&self, got: &[usize]) -> LayerError {
        LayerError::ShapeMismatch {
            layer: "conv1d",
            expected: format!("[steps, {}]", self.spec.in_channels),
            got: got.to_vec(),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims();
        if dims.len() != 3 {
            return Err(self.shape_error(dims));
        }
        let batch = dims[0];
        let steps = dims[1];
        let out_sample = self.output_dims(&dims[1..])?;
        let (k, c, o) = (self.spec.kernel_size, self.spec.in_channels, self.spec.out_channels);
        let out_steps = out_sample[0];

        let kernel = self.params.expect("kernel").data();
        let bias = self.params.expect("bias").data();
        let mut out = Tensor::zeros_dims(&[batch, out_steps, o]);
        for (b, out_b) in out.data_mut().chunks_exact_mut(out_steps * o).enumerate() {
            for row in out_b.chunks_exact_mut(o) {
                row.copy_from_slice(bias);
            }
            // Row t of the window matrix is x[b, t..t+k, :], contiguous in memory,
            // so consecutive rows overlap with stride `c`.
            let xb = &x.data()[b * steps * c..(b + 1) * steps * c];
            gemm(
                out_steps,
                k * c,
                o,
                1.0,
                MatRef::strided(xb, c, 1),
                MatRef::row_major(kernel, o),
                1.0,
                MatMut::row_major(out_b, o),
            );
        }

        let pre_activation = match self.spec.activation {
            Activation::Linear => None,
            Activation::Relu => {
                let pre = out.clone();
                for v in out.data_mut() {
                    *v = v.max(0.0);
                }
                Some(pre)
            }
        };
        let out_dims = out.dims().to_vec();
        Ok((
            out,
            ForwardCache::Conv1d(ConvCache {
                input: x.clone(),
                pre_activation,
                out_dims,
            }),
        ))
    }

    pub(crate) fn backward(
        &self,
        grad_out: &Tensor,
        cache: &ConvCache,
    ) -> Result<(Tensor, LayerParams), LayerError> {
        check_grad_shape("conv1d", grad_out, &cache.out_dims)?;
        let (k, c, o) = (self.spec.kernel_size, self.spec.in_channels, self.spec.out_channels);
        let x = &cache.input;
        let (batch, steps) = (x.dims()[0], x.dims()[1]);
        let out_steps = cache.out_dims[1];

        let mut g = grad_out.clone();
        if let Some(pre) = &cache.pre_activation {
            for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
                if p <= 0.0 {
                    *gv = 0.0;
                }
            }
        }

        let kernel = self.params.expect("kernel").data();
        let mut grads = self.params.zeros_like();
        let mut grad_x = Tensor::zeros(x.shape());
        {
            let gk = grads.get_mut("kernel").unwrap().data_mut();
            for b in 0..batch {
                let xb = &x.data()[b * steps * c..(b + 1) * steps * c];
                let gb = &g.data()[b * out_steps * o..(b + 1) * out_steps * o];
                // dK[(dt,ci), o] += sum_t X[t, (dt,ci)] * G[t, o]
                gemm(
                    k * c,
                    out_steps,
                    o,
                    1.0,
                    MatRef::strided(xb, 1, c),
                    MatRef::row_major(gb, o),
                    1.0,
                    MatMut::row_major(gk, o),
                );
                // dx[t+dt, ci] += sum_o G[t, o] * K[dt, ci, o], one shift at a time
                let gxb = &mut grad_x.data_mut()[b * steps * c..(b + 1) * steps * c];
                for dt in 0..k {
                    gemm(
                        out_steps,
                        o,
                        c,
                        1.0,
                        MatRef::row_major(gb, o),
                        MatRef::transposed(&kernel[dt * c * o..(dt + 1) * c * o], o),
                        1.0,
                        MatMut::row_major(&mut gxb[dt * c..], c),
                    );
                }
            }
        }
        let gbias = grads.get_mut("bias").unwrap().data_mut();
        for row in g.data().chunks_exact(o) {
            for (acc, v) in gbias.iter_mut().zip(row) {
                *acc += v;
            }
        }
        Ok((grad_x, grads))
    }
}
