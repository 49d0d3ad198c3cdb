use crate::layers::{ForwardCache, Layer, LayerParams, LayerSpec, Mode};
use crate::tensor::{RngState, Tensor};

use super::ModelError;

/// Ordered layer stack with a fixed per-sample input shape.
///
/// Adjacent layers are checked for shape compatibility at construction, so a
/// network that builds never fails on a conforming input batch.
#[derive(Debug, Clone)]
pub struct Network {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_dims: Vec<usize>, layers: Vec<Layer>) -> Result<Self, ModelError> {
        let mut dims = input_dims.clone();
        for (i, layer) in layers.iter().enumerate() {
            dims = layer
                .output_dims(&dims)
                .map_err(|source| ModelError::Compose { index: i, source })?;
        }
        Ok(Network {
            input_dims,
            output_dims: dims,
            layers,
        })
    }

    pub fn from_specs(
        input_dims: Vec<usize>,
        specs: &[LayerSpec],
        rng: &mut RngState,
    ) -> Result<Self, ModelError> {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| Layer::init(s, rng).map_err(|source| ModelError::Compose { index: i, source }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(input_dims, layers)
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().numel()).sum()
    }

    /// Per-sample shape after each layer, starting with the input.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        let mut trace = vec![self.input_dims.clone()];
        for layer in &self.layers {
            let next = layer
                .output_dims(trace.last().unwrap())
                .expect("checked at construction");
            trace.push(next);
        }
        trace
    }

    /// `(qualified name, tensor)` for every parameter in layer order. Names are
    /// `<layer index>.<parameter>`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params().iter().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .filter_map(|l| l.params_mut())
            .flat_map(|p| p.iter_mut().map(|(_, t)| t))
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        if x.dims().len() != self.input_dims.len() + 1 || x.dims()[1..] != self.input_dims[..] {
            return Err(ModelError::Input {
                expected: self.input_dims.clone(),
                got: x.dims().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs a batch `[n, ...input_dims]` through every layer.
    pub fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Tensor, Vec<ForwardCache>), ModelError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer
                .forward(&h, mode, rng)
                .map_err(|source| ModelError::Layer { index: i, source })?;
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// Inference-mode forward pass; deterministic in the parameters and input.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        // No layer draws randomness in inference mode.
        Ok(self.forward(x, Mode::Infer, &mut RngState::new(0))?.0)
    }

    /// Backpropagates `grad_out` and returns the input gradient plus one
    /// `LayerParams` of gradients per layer.
    pub fn backward(
        &self,
        grad_out: &Tensor,
        caches: &[ForwardCache],
    ) -> Result<(Tensor, Vec<LayerParams>), ModelError> {
        if caches.len() != self.layers.len() {
            return Err(ModelError::CacheCount {
                expected: self.layers.len(),
                got: caches.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let (gx, gp) = layer
                .backward(&g, cache)
                .map_err(|source| ModelError::Layer { index: i, source })?;
            grads.push(gp);
            g = gx;
        }
        grads.reverse();
        Ok((g, grads))
    }
}

/// Flattens per-layer gradients into the order of [`Network::params_mut`].
pub fn flatten_grads(grads: Vec<LayerParams>) -> Vec<Tensor> {
    grads.into_iter().flat_map(LayerParams::into_tensors).collect()
}
