use super::{check_grad_shape, glorot, ForwardCache, LayerError, LayerParams};
use crate::tensor::{gemm, MatMut, MatRef, RngState, Tensor};

/// Fully connected layer with linear activation over `[batch, in]`.
///
/// `kernel` is stored `[in, out]`, so a batch computes `x · kernel + bias`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub(crate) params: LayerParams,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
}

impl Dense {
    pub fn new(input_size: usize, output_size: usize, rng: &mut RngState) -> Result<Self, LayerError> {
        if input_size == 0 || output_size == 0 {
            return Err(LayerError::InvalidSpec("dense sizes must be >= 1".into()));
        }
        let mut params = LayerParams::new();
        params.insert(
            "kernel",
            glorot(&[input_size, output_size], input_size, output_size, rng)?,
        )?;
        params.insert("bias", Tensor::zeros_dims(&[output_size]))?;
        Ok(Dense { params })
    }

    pub fn input_size(&self) -> usize {
        self.params.expect("kernel").dims()[0]
    }

    pub fn output_size(&self) -> usize {
        self.params.expect("kernel").dims()[1]
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub(crate) fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        if input != [self.input_size()] {
            return Err(LayerError::ShapeMismatch {
                layer: "dense",
                expected: format!("[{}]", self.input_size()),
                got: input.to_vec(),
            });
        }
        Ok(vec![self.output_size()])
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims();
        if dims.len() != 2 {
            return Err(LayerError::ShapeMismatch {
                layer: "dense",
                expected: format!("[batch, {}]", self.input_size()),
                got: dims.to_vec(),
            });
        }
        self.output_dims(&dims[1..])?;
        let (batch, n_in, n_out) = (dims[0], self.input_size(), self.output_size());
        let mut y = Tensor::zeros_dims(&[batch, n_out]);
        let bias = self.params.expect("bias").data();
        for row in y.data_mut().chunks_exact_mut(n_out) {
            row.copy_from_slice(bias);
        }
        gemm(
            batch,
            n_in,
            n_out,
            1.0,
            MatRef::row_major(x.data(), n_in),
            MatRef::row_major(self.params.expect("kernel").data(), n_out),
            1.0,
            MatMut::row_major(y.data_mut(), n_out),
        );
        Ok((y, ForwardCache::Dense(DenseCache { input: x.clone() })))
    }

    pub(crate) fn backward(
        &self,
        grad_out: &Tensor,
        cache: &DenseCache,
    ) -> Result<(Tensor, LayerParams), LayerError> {
        let batch = cache.input.dims()[0];
        let (n_in, n_out) = (self.input_size(), self.output_size());
        check_grad_shape("dense", grad_out, &[batch, n_out])?;
        let mut grads = self.params.zeros_like();
        gemm(
            n_in,
            batch,
            n_out,
            1.0,
            MatRef::transposed(cache.input.data(), n_in),
            MatRef::row_major(grad_out.data(), n_out),
            0.0,
            MatMut::row_major(grads.get_mut("kernel").unwrap().data_mut(), n_out),
        );
        let gb = grads.get_mut("bias").unwrap().data_mut();
        for row in grad_out.data().chunks_exact(n_out) {
            for (acc, v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut gx = Tensor::zeros(cache.input.shape());
        gemm(
            batch,
            n_out,
            n_in,
            1.0,
            MatRef::row_major(grad_out.data(), n_out),
            MatRef::transposed(self.params.expect("kernel").data(), n_out),
            0.0,
            MatMut::row_major(gx.data_mut(), n_in),
        );
        Ok((gx, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::check_layer_gradients;
    use crate::layers::{Layer, Mode};
    use crate::tensor::Shape;

    fn with(kernel: Tensor, bias: Tensor) -> Dense {
        let mut d = Dense::new(kernel.dims()[0], kernel.dims()[1], &mut RngState::new(0)).unwrap();
        *d.params.get_mut("kernel").unwrap() = kernel;
        *d.params.get_mut("bias").unwrap() = bias;
        d
    }

    #[test]
    fn identity_map() {
        let d = with(
            Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::vector(vec![0.0, 0.0]),
        );
        let x = Tensor::from_vec(vec![1, 2], vec![3.0, -4.0]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0.data(), x.data());
    }

    #[test]
    fn constant_map() {
        let d = with(Tensor::zeros_dims(&[3, 1]), Tensor::vector(vec![2.5]));
        let x = Tensor::from_vec(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.forward(&x).unwrap().0.data(), &[2.5]);
    }

    #[test]
    fn matches_matmul_oracle() {
        let mut rng = RngState::new(12);
        let d = Dense::new(3, 2, &mut rng).unwrap();
        let x = Tensor::random_uniform(&Shape::new(vec![4, 3]).unwrap(), -1.0, 1.0, &mut rng).unwrap();
        let want = x.matmul(d.params.expect("kernel")).unwrap();
        let (y, _) = d.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let d = Dense::new(3, 2, &mut RngState::new(0)).unwrap();
        assert!(d.forward(&Tensor::zeros_dims(&[1, 4])).is_err());
    }

    #[test]
    fn finite_differences() {
        let layer = Layer::Dense(Dense::new(4, 3, &mut RngState::new(6)).unwrap());
        let x = Tensor::random_uniform(&Shape::new(vec![3, 4]).unwrap(), -1.0, 1.0, &mut RngState::new(7)).unwrap();
        check_layer_gradients(&layer, &x, Mode::Train, 1e-6, 0);
    }
}
