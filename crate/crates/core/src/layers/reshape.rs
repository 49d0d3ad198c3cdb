use super::{ForwardCache, Layer, LayerError, LayerParams, Mode};
use crate::tensor::{RngState, Tensor};

/// Row-major flatten of every per-sample axis: `[batch, a, b, ..] -> [batch, a*b*..]`.
#[derive(Debug, Clone, Copy)]
pub struct Flatten;

impl Flatten {
    pub(crate) fn output_dims(input: &[usize]) -> Result<Vec<usize>, LayerError> {
        if input.is_empty() {
            return Err(LayerError::ShapeMismatch {
                layer: "flatten",
                expected: "rank >= 1 sample".into(),
                got: input.to_vec(),
            });
        }
        Ok(vec![input.iter().product()])
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims().to_vec();
        let out = Self::output_dims(&dims[1..])?;
        let y = x.clone().reshape(vec![dims[0], out[0]])?;
        Ok((y, ForwardCache::Flatten { input_dims: dims }))
    }

    pub(crate) fn backward(grad_out: &Tensor, input_dims: &[usize]) -> Result<Tensor, LayerError> {
        grad_out
            .clone()
            .reshape(input_dims.to_vec())
            .map_err(|_| LayerError::CacheMismatch {
                layer: "flatten",
                detail: format!("gradient {:?} vs input {:?}", grad_out.dims(), input_dims),
            })
    }
}

/// Applies `inner` to every slice along the first per-sample axis with shared
/// parameters. Slices are folded into the batch axis, so parameter gradients
/// are summed over slices.
#[derive(Debug, Clone)]
pub struct TimeDistributed {
    pub(crate) inner: Box<Layer>,
}

#[derive(Debug, Clone)]
pub struct TimeDistributedCache {
    batch: usize,
    outer: usize,
    inner_out_dims: Vec<usize>,
    inner: ForwardCache,
}

impl TimeDistributed {
    pub fn new(inner: Layer) -> Self {
        TimeDistributed {
            inner: Box::new(inner),
        }
    }

    pub fn inner(&self) -> &Layer {
        &self.inner
    }

    pub fn params(&self) -> &LayerParams {
        self.inner.params()
    }

    pub(crate) fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        let Some((&outer, rest)) = input.split_first() else {
            return Err(LayerError::ShapeMismatch {
                layer: "time_distributed",
                expected: "[outer_steps, ...]".into(),
                got: input.to_vec(),
            });
        };
        let inner = self.inner.output_dims(rest).map_err(slice_error)?;
        let mut out = vec![outer];
        out.extend(inner);
        Ok(out)
    }

    pub(crate) fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims();
        if dims.len() < 3 {
            return Err(LayerError::ShapeMismatch {
                layer: "time_distributed",
                expected: "[batch, outer_steps, ...]".into(),
                got: dims.to_vec(),
            });
        }
        let (batch, outer) = (dims[0], dims[1]);
        let mut folded = vec![batch * outer];
        folded.extend_from_slice(&dims[2..]);
        let (y, cache) = self
            .inner
            .forward(&x.clone().reshape(folded)?, mode, rng)
            .map_err(slice_error)?;
        let inner_out_dims = y.dims().to_vec();
        let mut out_dims = vec![batch, outer];
        out_dims.extend_from_slice(&inner_out_dims[1..]);
        let y = y.reshape(out_dims)?;
        Ok((
            y,
            ForwardCache::TimeDistributed(Box::new(TimeDistributedCache {
                batch,
                outer,
                inner_out_dims,
                inner: cache,
            })),
        ))
    }

    pub(crate) fn backward(
        &self,
        grad_out: &Tensor,
        cache: &TimeDistributedCache,
    ) -> Result<(Tensor, LayerParams), LayerError> {
        let expected = &cache.inner_out_dims;
        let gd = grad_out.dims();
        if gd.len() != expected.len() + 1
            || gd[0] != cache.batch
            || gd[1] != cache.outer
            || gd[2..] != expected[1..]
        {
            return Err(LayerError::CacheMismatch {
                layer: "time_distributed",
                detail: format!("gradient {:?}", gd),
            });
        }
        let g = grad_out.clone().reshape(expected.clone())?;
        let (gx, gp) = self.inner.backward(&g, &cache.inner).map_err(slice_error)?;
        let mut dims = vec![cache.batch, cache.outer];
        dims.extend_from_slice(&gx.dims()[1..]);
        Ok((gx.reshape(dims)?, gp))
    }
}

// Every slice shares one shape, so an inner failure is first hit at slice 0.
fn slice_error(e: LayerError) -> LayerError {
    LayerError::Slice {
        index: 0,
        source: Box::new(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::check_layer_gradients;
    use crate::layers::{Activation, Conv1d, ConvSpec, Dense};
    use crate::tensor::Shape;

    fn random(dims: &[usize], seed: u64) -> Tensor {
        Tensor::random_uniform(&Shape::new(dims.to_vec()).unwrap(), -1.0, 1.0, &mut RngState::new(seed)).unwrap()
    }

    #[test]
    fn flatten_row_major() {
        let x = Tensor::from_vec(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, cache) = Flatten.forward(&x).unwrap();
        assert_eq!(y.dims(), &[1, 4]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let ForwardCache::Flatten { input_dims } = cache else { unreachable!() };
        assert_eq!(Flatten::backward(&y, &input_dims).unwrap(), x);
        assert_eq!(Flatten::output_dims(&[2, 64]).unwrap(), vec![128]);
    }

    #[test]
    fn time_distributed_flatten() {
        let td = TimeDistributed::new(Layer::Flatten(Flatten));
        let x = random(&[1, 4, 2, 64], 1);
        let (y, _) = td.forward(&x, Mode::Infer, &mut RngState::new(0)).unwrap();
        assert_eq!(y.dims(), &[1, 4, 128]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn single_slice_matches_inner() {
        let conv = Layer::Conv1d(
            Conv1d::new(
                ConvSpec { in_channels: 2, out_channels: 3, kernel_size: 2, activation: Activation::Relu },
                &mut RngState::new(3),
            )
            .unwrap(),
        );
        let td = TimeDistributed::new(conv.clone());
        let x = random(&[2, 1, 5, 2], 4);
        let (y, _) = td.forward(&x, Mode::Infer, &mut RngState::new(0)).unwrap();
        let (direct, _) = conv
            .forward(&x.clone().reshape(vec![2, 5, 2]).unwrap(), Mode::Infer, &mut RngState::new(0))
            .unwrap();
        assert_eq!(y.data(), direct.data());
    }

    #[test]
    fn slice_errors_carry_index() {
        let td = TimeDistributed::new(Layer::Dense(Dense::new(3, 1, &mut RngState::new(0)).unwrap()));
        let err = td.forward(&random(&[1, 2, 4], 0), Mode::Infer, &mut RngState::new(0)).unwrap_err();
        assert!(matches!(err, LayerError::Slice { index: 0, .. }));
    }

    #[test]
    fn finite_differences_over_slices() {
        let conv = Conv1d::new(
            ConvSpec { in_channels: 1, out_channels: 2, kernel_size: 3, activation: Activation::Linear },
            &mut RngState::new(5),
        )
        .unwrap();
        let layer = Layer::TimeDistributed(TimeDistributed::new(Layer::Conv1d(conv)));
        check_layer_gradients(&layer, &random(&[2, 3, 6, 1], 6), Mode::Train, 1e-6, 0);
    }

    #[test]
    fn permuting_slices_permutes_outputs_and_keeps_param_grads() {
        let conv = Conv1d::new(
            ConvSpec { in_channels: 1, out_channels: 2, kernel_size: 2, activation: Activation::Relu },
            &mut RngState::new(8),
        )
        .unwrap();
        let td = TimeDistributed::new(Layer::Conv1d(conv));
        let x = random(&[1, 3, 4, 1], 9);
        let perm = [2usize, 0, 1];
        let slice = 4;
        let permuted: Vec<f64> = perm
            .iter()
            .flat_map(|&p| x.data()[p * slice..(p + 1) * slice].to_vec())
            .collect();
        let xp = Tensor::from_vec(vec![1, 3, 4, 1], permuted).unwrap();

        let mut rng = RngState::new(0);
        let (y, c) = td.forward(&x, Mode::Train, &mut rng).unwrap();
        let (yp, cp) = td.forward(&xp, Mode::Train, &mut rng).unwrap();
        let out_slice = 3 * 2;
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(
                &yp.data()[i * out_slice..(i + 1) * out_slice],
                &y.data()[p * out_slice..(p + 1) * out_slice]
            );
        }
        let g = Tensor::full(y.shape(), 1.0);
        let (ForwardCache::TimeDistributed(c), ForwardCache::TimeDistributed(cp)) = (c, cp) else {
            unreachable!()
        };
        let (_, gp) = td.backward(&g, &c).unwrap();
        let (_, gpp) = td.backward(&g, &cp).unwrap();
        for ((_, a), (_, b)) in gp.iter().zip(gpp.iter()) {
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
