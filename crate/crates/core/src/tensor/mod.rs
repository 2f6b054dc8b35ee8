//! Dense NCHW float tensors and the inference kernels the detector needs.

mod kernels;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::profile::memory::TrackedBuf;

pub use kernels::{
    activation, add, batchnorm_infer, concat_channels, concat_many, conv2d, global_pool, pool,
    sigmoid, silu, upsample_nearest2x, Activation, ConvSpec, PoolKind,
};
pub(crate) use kernels::{canonical_sum, conv2d_raw, valid_range};
pub use kernels::ConvGeometry;

/// Batch, channels, height, width. All dimensions are at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            contract!("tensor dimensions must be >= 1, got ({n}, {c}, {h}, {w})");
        }
        Ok(Self { n, c, h, w })
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Row-major (n, c, h, w) float32 tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: TrackedBuf<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            contract!("data length {} does not match shape {shape}", data.len());
        }
        Ok(Self { shape, data: TrackedBuf::new(data) })
    }

    pub fn from_dims(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        Self::new(Shape::new(dims[0], dims[1], dims[2], dims[3])?, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Self { shape, data: TrackedBuf::new(vec![value; shape.numel()]) }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Self { shape, data: TrackedBuf::new(data) }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.data.to_vec()
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.shape.index(n, c, y, x)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Slice of one (n, c) plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: TrackedBuf::new(self.data.iter().map(|&v| f(v)).collect()) }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}
