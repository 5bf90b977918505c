use super::Scalar;
use crate::error::{Error, Result};

/// Logical dimensions `(N, C, H, W)`.
pub type Dims = [usize; 4];

pub fn numel(dims: Dims) -> usize {
    dims.iter().product()
}

/// Dense rank-4 tensor in row-major `NCHW` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Dims,
    data: Vec<T>,
    pub requires_grad: bool,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Dims, data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid("tensor", format!("zero-sized dims {dims:?}")));
        }
        if data.len() != numel(dims) {
            return Err(Error::shape("tensor", dims, data.len()));
        }
        Ok(Self {
            dims,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: Dims, v: T) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "zero-sized dims {dims:?}");
        Self {
            dims,
            data: vec![v; numel(dims)],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize) -> T) -> Self {
        let mut t = Self::zeros(dims);
        t.data.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        t
    }

    pub fn scalar(v: T) -> Self {
        Self::full([1, 1, 1, 1], v)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        let [_, cc, hh, ww] = self.dims;
        self.data[((n * cc + c) * hh + h) * ww + w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-type conversion; gradients are dropped.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    /// Reinterpret with new dims of equal element count.
    pub fn reshape(mut self, dims: Dims) -> Result<Self> {
        if numel(dims) != self.data.len() {
            return Err(Error::shape("reshape", self.dims, dims));
        }
        self.dims = dims;
        self.grad = None;
        Ok(self)
    }

    /// Batch item `n` as a `(1, C, H, W)` tensor.
    pub fn item(&self, n: usize) -> Tensor<T> {
        let per = numel(self.dims) / self.dims[0];
        Tensor {
            dims: [1, self.dims[1], self.dims[2], self.dims[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
            requires_grad: false,
            grad: None,
        }
    }

    /// Stack along the batch axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack", "no tensors"))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut n = 0;
        for t in items {
            if t.dims[1..] != first.dims[1..] {
                return Err(Error::shape("stack", first.dims, t.dims));
            }
            data.extend_from_slice(&t.data);
            n += t.dims[0];
        }
        Tensor::new([n, c, h, w], data)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        let data = super::kernels::concat_channels(a.dims, &a.data, b.dims, &b.data)?;
        Tensor::new([a.dims[0], a.dims[1] + b.dims[1], a.dims[2], a.dims[3]], data)
    }
}
