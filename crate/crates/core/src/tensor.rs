//! Dense row-major `f64` tensors and the seeded random source used for
//! initialization, dropout masks and shuffling.

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: every extent must be >= 1 and rank >= 1")]
    InvalidShape(Vec<usize>),
    #[error("shape {0:?} has too many elements")]
    Overflow(Vec<usize>),
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {dims:?}")]
    DataLength { dims: Vec<usize>, len: usize },
    #[error("invalid range [{lo}, {hi})")]
    InvalidRange { lo: f64, hi: f64 },
}

/// Ordered list of positive extents.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(TensorError::InvalidShape(dims));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(TensorError::Overflow(dims));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = TensorError;

    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.0
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Mean,
    Max,
    Sum,
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn zeros(shape: &Shape) -> Tensor {
        Tensor {
            shape: shape.clone(),
            data: vec![0.0; shape.numel()],
        }
    }

    /// Zeros with dimensions known to be valid at the call site.
    pub(crate) fn zeros_dims(dims: &[usize]) -> Tensor {
        let shape = Shape::new(dims.to_vec()).expect("internal shape must be valid");
        Tensor::zeros(&shape)
    }

    pub fn full(shape: &Shape, value: f64) -> Tensor {
        Tensor {
            shape: shape.clone(),
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Tensor, TensorError> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(TensorError::DataLength {
                dims: shape.0,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Rank-1 tensor over `data`. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor::from_vec(vec![data.len()], data).expect("vector must be nonempty")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Tensor, TensorError> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape.0,
                right: shape.0,
            });
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn elementwise(&self, other: &Tensor, op: ElementwiseOp) -> Result<Tensor, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "elementwise",
                left: self.shape.0.clone(),
                right: other.shape.0.clone(),
            });
        }
        let f: fn(f64, f64) -> f64 = match op {
            ElementwiseOp::Add => |a, b| a + b,
            ElementwiseOp::Sub => |a, b| a - b,
            ElementwiseOp::Mul => |a, b| a * b,
        };
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.elementwise(other, ElementwiseOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.elementwise(other, ElementwiseOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.elementwise(other, ElementwiseOp::Mul)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "add_assign",
                left: self.shape.0.clone(),
                right: other.shape.0.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn reduce(&self, op: ReduceOp) -> f64 {
        match op {
            ReduceOp::Sum => self.data.iter().sum(),
            ReduceOp::Mean => self.data.iter().sum::<f64>() / self.data.len() as f64,
            ReduceOp::Max => self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn sum(&self) -> f64 {
        self.reduce(ReduceOp::Sum)
    }

    pub fn mean(&self) -> f64 {
        self.reduce(ReduceOp::Mean)
    }

    pub fn max(&self) -> f64 {
        self.reduce(ReduceOp::Max)
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (&[m, k], &[k2, n]) = (self.dims(), other.dims()) else {
            return Err(TensorError::ShapeMismatch {
                op: "matmul (rank)",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let mut out = Tensor::zeros_dims(&[m, n]);
        gemm(
            m,
            k,
            n,
            1.0,
            MatRef::row_major(&self.data, k),
            MatRef::row_major(&other.data, n),
            0.0,
            MatMut::row_major(&mut out.data, n),
        );
        Ok(out)
    }

    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        let &[m, n] = self.dims() else {
            return Err(TensorError::ShapeMismatch {
                op: "transpose (rank)",
                left: self.dims().to_vec(),
                right: vec![],
            });
        };
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::from_vec(vec![n, m], data)
    }

    pub fn random_uniform(
        shape: &Shape,
        lo: f64,
        hi: f64,
        rng: &mut RngState,
    ) -> Result<Tensor, TensorError> {
        // Negated comparison also rejects NaN bounds.
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(TensorError::InvalidRange { lo, hi });
        }
        let dist = Uniform::new(lo, hi);
        let data = (0..shape.numel()).map(|_| dist.sample(&mut rng.inner)).collect();
        Ok(Tensor {
            shape: shape.clone(),
            data,
        })
    }

    /// Copies sample rows `indices` along axis 0 into a new tensor.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor, TensorError> {
        let row = self.numel() / self.dims()[0];
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            if i >= self.dims()[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "gather_rows",
                    left: self.dims().to_vec(),
                    right: vec![i],
                });
            }
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut dims = self.dims().to_vec();
        dims[0] = indices.len();
        Tensor::from_vec(dims, data)
    }
}

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn row_major(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        MatRef {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }

    pub fn strided(data: &'a [f64], row_stride: usize, col_stride: usize) -> Self {
        MatRef {
            data,
            row_stride,
            col_stride,
        }
    }
}

pub(crate) struct MatMut<'a> {
    pub data: &'a mut [f64],
    pub row_stride: usize,
}

impl<'a> MatMut<'a> {
    pub fn row_major(data: &'a mut [f64], cols: usize) -> Self {
        MatMut {
            data,
            row_stride: cols,
        }
    }
}

fn last_index(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    (rows - 1) * rs + (cols - 1) * cs
}

/// `c = alpha * a[m,k] * b[k,n] + beta * c[m,n]` over strided views.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: MatRef<'_>,
    b: MatRef<'_>,
    beta: f64,
    c: MatMut<'_>,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for v in &mut c.data[i * c.row_stride..i * c.row_stride + n] {
                *v *= beta;
            }
        }
        return;
    }
    assert!(last_index(m, k, a.row_stride, a.col_stride) < a.data.len());
    assert!(last_index(k, n, b.row_stride, b.col_stride) < b.data.len());
    assert!(last_index(m, n, c.row_stride, 1) < c.data.len());
    assert!(c.row_stride >= n, "output rows must not overlap");
    // SAFETY: the asserts above bound every index the kernel touches, and the
    // output view has non-overlapping rows with unit column stride.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr(),
            c.row_stride as isize,
            1,
        );
    }
}

/// Seeded, portable random source (ChaCha8).
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream derived from the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.gen_range(0..bound)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
