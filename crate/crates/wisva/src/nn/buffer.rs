//! Flat row-major tensor storage.

use num_traits::Float;

/// Element type for layer math: f32 in the pipeline, f64 under gradcheck.
pub trait Real:
    Float + num_traits::NumAssign + std::iter::Sum + Send + Sync + std::fmt::Debug + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense tensor with row-major data; dims are (N, C, H, W) for feature maps
/// and (N, F) for flattened features, but any rank is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBuffer<E = f32> {
    dims: Vec<usize>,
    data: Vec<E>,
}

impl<E: Real> TensorBuffer<E> {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Self { dims, data: vec![E::zero(); len] }
    }

    pub fn from_vec(dims: Vec<usize>, data: Vec<E>) -> Self {
        assert_eq!(
            data.len(),
            dims.iter().product::<usize>(),
            "tensor data length does not match dims {dims:?}"
        );
        Self { dims, data }
    }

    pub fn scalar_count(dims: &[usize]) -> usize {
        dims.iter().product()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    /// Reinterprets the buffer with new dims of equal element count.
    pub fn reshaped(mut self, dims: Vec<usize>) -> Self {
        assert_eq!(self.data.len(), dims.iter().product::<usize>());
        self.dims = dims;
        self
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Self { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// (N, C, H, W) view; panics when the rank is not 4.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.dims.len(), 4, "expected rank-4 tensor, got {:?}", self.dims);
        (self.dims[0], self.dims[1], self.dims[2], self.dims[3])
    }

    /// (N, F) view; panics when the rank is not 2.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.dims.len(), 2, "expected rank-2 tensor, got {:?}", self.dims);
        (self.dims[0], self.dims[1])
    }

    /// Converts every element, typically between f32 and f64.
    pub fn cast<T: Real>(&self) -> TensorBuffer<T> {
        TensorBuffer {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn iter_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
