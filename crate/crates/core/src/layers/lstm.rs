//! Peephole-free LSTM, optionally bidirectional.
//!
//! Gate pre-activations are laid out `[i | f | g | o]`, each `units` wide:
//!
//! ```text
//! z  = x_t · W + h_{t-1} · U + b
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);   g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! with `h_0 = c_0 = 0`. The reverse direction runs the same recurrence over
//! time indices `T-1, ..., 0` with its own parameters; in sequence mode its
//! state for time `t` is written back at position `t`.

use serde::{Deserialize, Serialize};

use super::{check_grad_shape, glorot, ForwardCache, LayerError, LayerParams};
use crate::tensor::{gemm, MatMut, MatRef, RngState, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub input_size: usize,
    pub units: usize,
    pub bidirectional: bool,
    /// Emit `[T, width]` when set, otherwise only the final states `[width]`.
    pub return_sequences: bool,
}

impl LstmSpec {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn output_width(&self) -> usize {
        self.directions() * self.units
    }

    /// `4 * (in*units + units^2 + units)` per direction.
    pub fn param_count(&self) -> usize {
        let u = self.units;
        self.directions() * 4 * (self.input_size * u + u * u + u)
    }
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub(crate) spec: LstmSpec,
    pub(crate) params: LayerParams,
}

const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

/// Per-direction intermediates, indexed by processing step `s` (not time).
#[derive(Debug, Clone)]
struct DirCache {
    /// Activated gates `[T, B, 4u]`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Tensor,
    out_dims: Vec<usize>,
    dirs: Vec<DirCache>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Lstm {
    pub fn new(spec: LstmSpec, rng: &mut RngState) -> Result<Self, LayerError> {
        if spec.units == 0 || spec.input_size == 0 {
            return Err(LayerError::InvalidSpec(format!("{spec:?}")));
        }
        let (n_in, u) = (spec.input_size, spec.units);
        let mut params = LayerParams::new();
        for dir in &DIRECTIONS[..spec.directions()] {
            params.insert(format!("{dir}.kernel"), glorot(&[n_in, 4 * u], n_in, 4 * u, rng)?)?;
            params.insert(format!("{dir}.recurrent"), glorot(&[u, 4 * u], u, 4 * u, rng)?)?;
            let mut bias = Tensor::zeros_dims(&[4 * u]);
            bias.data_mut()[u..2 * u].fill(1.0);
            params.insert(format!("{dir}.bias"), bias)?;
        }
        Ok(Lstm { spec, params })
    }

    pub fn spec(&self) -> &LstmSpec {
        &self.spec
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub(crate) fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        let &[steps, n_in] = input else {
            return Err(self.shape_error(input));
        };
        if n_in != self.spec.input_size {
            return Err(self.shape_error(input));
        }
        Ok(if self.spec.return_sequences {
            vec![steps, self.spec.output_width()]
        } else {
            vec![self.spec.output_width()]
        })
    }

    fn shape_error(&self, got: &[usize]) -> LayerError {
        LayerError::ShapeMismatch {
            layer: "lstm",
            expected: format!("[steps, {}]", self.spec.input_size),
            got: got.to_vec(),
        }
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), LayerError> {
        let dims = x.dims();
        if dims.len() != 3 {
            return Err(self.shape_error(dims));
        }
        let sample_out = self.output_dims(&dims[1..])?;
        let (batch, steps) = (dims[0], dims[1]);
        let u = self.spec.units;
        let width = self.spec.output_width();

        let mut out_dims = vec![batch];
        out_dims.extend(sample_out);
        let mut out = Tensor::zeros_dims(&out_dims);
        let mut dirs = Vec::with_capacity(self.spec.directions());
        for (d, name) in DIRECTIONS[..self.spec.directions()].iter().enumerate() {
            let cache = self.run_direction(x, name, d == 1);
            let offset = d * u;
            let last = steps - 1;
            for s in 0..steps {
                if !self.spec.return_sequences && s != last {
                    continue;
                }
                let t = if d == 1 { steps - 1 - s } else { s };
                for b in 0..batch {
                    let h = &cache.hidden[(s * batch + b) * u..(s * batch + b + 1) * u];
                    let dst = if self.spec.return_sequences {
                        (b * steps + t) * width + offset
                    } else {
                        b * width + offset
                    };
                    out.data_mut()[dst..dst + u].copy_from_slice(h);
                }
            }
            dirs.push(cache);
        }
        Ok((
            out,
            ForwardCache::Lstm(Box::new(LstmCache {
                input: x.clone(),
                out_dims,
                dirs,
            })),
        ))
    }

    fn run_direction(&self, x: &Tensor, dir: &str, reverse: bool) -> DirCache {
        let (batch, steps, n_in) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let u = self.spec.units;
        let g4 = 4 * u;
        let kernel = self.params.expect(&format!("{dir}.kernel")).data();
        let recurrent = self.params.expect(&format!("{dir}.recurrent")).data();
        let bias = self.params.expect(&format!("{dir}.bias")).data();

        // Input projection for every (b, t) at once: rows b*T + t.
        let mut proj = vec![0.0; batch * steps * g4];
        gemm(
            batch * steps,
            n_in,
            g4,
            1.0,
            MatRef::row_major(x.data(), n_in),
            MatRef::row_major(kernel, g4),
            0.0,
            MatMut::row_major(&mut proj, g4),
        );

        let mut cache = DirCache {
            gates: vec![0.0; steps * batch * g4],
            cells: vec![0.0; steps * batch * u],
            tanh_cells: vec![0.0; steps * batch * u],
            hidden: vec![0.0; steps * batch * u],
        };
        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            let z = &mut cache.gates[s * batch * g4..(s + 1) * batch * g4];
            for b in 0..batch {
                let src = &proj[(b * steps + t) * g4..(b * steps + t + 1) * g4];
                for ((zv, p), bv) in z[b * g4..(b + 1) * g4].iter_mut().zip(src).zip(bias) {
                    *zv = p + bv;
                }
            }
            if s > 0 {
                let h_prev = &cache.hidden[(s - 1) * batch * u..s * batch * u];
                gemm(
                    batch,
                    u,
                    g4,
                    1.0,
                    MatRef::row_major(h_prev, u),
                    MatRef::row_major(recurrent, g4),
                    1.0,
                    MatMut::row_major(z, g4),
                );
            }
            for b in 0..batch {
                let zb = &mut z[b * g4..(b + 1) * g4];
                let base = (s * batch + b) * u;
                for j in 0..u {
                    let i = sigmoid(zb[j]);
                    let f = sigmoid(zb[u + j]);
                    let g = zb[2 * u + j].tanh();
                    let o = sigmoid(zb[3 * u + j]);
                    zb[j] = i;
                    zb[u + j] = f;
                    zb[2 * u + j] = g;
                    zb[3 * u + j] = o;
                    let c_prev = if s > 0 { cache.cells[base - batch * u + j] } else { 0.0 };
                    let c = f * c_prev + i * g;
                    let tc = c.tanh();
                    cache.cells[base + j] = c;
                    cache.tanh_cells[base + j] = tc;
                    cache.hidden[base + j] = o * tc;
                }
            }
        }
        cache
    }

    pub(crate) fn backward(
        &self,
        grad_out: &Tensor,
        cache: &LstmCache,
    ) -> Result<(Tensor, LayerParams), LayerError> {
        check_grad_shape("lstm", grad_out, &cache.out_dims)?;
        if cache.dirs.len() != self.spec.directions() {
            return Err(LayerError::CacheMismatch {
                layer: "lstm",
                detail: "direction count".into(),
            });
        }
        let x = &cache.input;
        let (batch, steps, n_in) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let u = self.spec.units;
        let g4 = 4 * u;
        let width = self.spec.output_width();

        let mut grads = self.params.zeros_like();
        let mut grad_x = Tensor::zeros(x.shape());
        for (d, dir) in DIRECTIONS[..self.spec.directions()].iter().enumerate() {
            let dc_ = &cache.dirs[d];
            let reverse = d == 1;
            let offset = d * u;
            let kernel = self.params.expect(&format!("{dir}.kernel")).data();
            let recurrent = self.params.expect(&format!("{dir}.recurrent")).data();

            let mut dz_all = vec![0.0; batch * steps * g4];
            let mut dh_next = vec![0.0; batch * u];
            let mut dc_next = vec![0.0; batch * u];
            let mut g_rec = vec![0.0; u * g4];
            let mut g_bias = vec![0.0; g4];

            for s in (0..steps).rev() {
                let t = if reverse { steps - 1 - s } else { s };
                for b in 0..batch {
                    let upstream: Option<&[f64]> = if self.spec.return_sequences {
                        let at = (b * steps + t) * width + offset;
                        Some(&grad_out.data()[at..at + u])
                    } else if s == steps - 1 {
                        let at = b * width + offset;
                        Some(&grad_out.data()[at..at + u])
                    } else {
                        None
                    };
                    let base = (s * batch + b) * u;
                    let gates = &dc_.gates[(s * batch + b) * g4..(s * batch + b + 1) * g4];
                    let dz = &mut dz_all[(b * steps + t) * g4..(b * steps + t + 1) * g4];
                    for j in 0..u {
                        let dh = dh_next[b * u + j] + upstream.map_or(0.0, |g| g[j]);
                        let (i, f, g, o) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
                        let tc = dc_.tanh_cells[base + j];
                        let c_prev = if s > 0 { dc_.cells[base - batch * u + j] } else { 0.0 };
                        let dc = dh * o * (1.0 - tc * tc) + dc_next[b * u + j];
                        dz[j] = dc * g * i * (1.0 - i);
                        dz[u + j] = dc * c_prev * f * (1.0 - f);
                        dz[2 * u + j] = dc * i * (1.0 - g * g);
                        dz[3 * u + j] = dh * tc * o * (1.0 - o);
                        dc_next[b * u + j] = dc * f;
                    }
                    for (acc, v) in g_bias.iter_mut().zip(dz.iter()) {
                        *acc += v;
                    }
                }
                // Rows of dZ for this step live at stride T*4u inside dz_all.
                let dz_step = MatRef::strided(&dz_all[t * g4..], steps * g4, 1);
                if s > 0 {
                    let h_prev = &dc_.hidden[(s - 1) * batch * u..s * batch * u];
                    gemm(
                        u,
                        batch,
                        g4,
                        1.0,
                        MatRef::transposed(h_prev, u),
                        dz_step,
                        1.0,
                        MatMut::row_major(&mut g_rec, g4),
                    );
                    gemm(
                        batch,
                        g4,
                        u,
                        1.0,
                        dz_step,
                        MatRef::transposed(recurrent, g4),
                        0.0,
                        MatMut::row_major(&mut dh_next, u),
                    );
                }
            }

            let g_kernel = grads.get_mut(&format!("{dir}.kernel")).unwrap().data_mut();
            gemm(
                n_in,
                batch * steps,
                g4,
                1.0,
                MatRef::transposed(x.data(), n_in),
                MatRef::row_major(&dz_all, g4),
                0.0,
                MatMut::row_major(g_kernel, g4),
            );
            gemm(
                batch * steps,
                g4,
                n_in,
                1.0,
                MatRef::row_major(&dz_all, g4),
                MatRef::transposed(kernel, g4),
                1.0,
                MatMut::row_major(grad_x.data_mut(), n_in),
            );
            grads
                .get_mut(&format!("{dir}.recurrent"))
                .unwrap()
                .data_mut()
                .copy_from_slice(&g_rec);
            grads
                .get_mut(&format!("{dir}.bias"))
                .unwrap()
                .data_mut()
                .copy_from_slice(&g_bias);
        }
        Ok((grad_x, grads))
    }
}
