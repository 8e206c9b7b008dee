//! Dense row-major 2D grids shared by the oracle, tensor, and eval modules.

use serde::{Deserialize, Serialize};

/// Row-major 2D grid. Row index `i` follows the y axis, column index `j`
/// the x axis, so cell `(i, j)` covers `[j*res, (j+1)*res) x [i*res, (i+1)*res)`
/// whenever the grid is tied to a metric resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2<T = f32> {
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid2<T> {
    pub fn filled(h: usize, w: usize, value: T) -> Self {
        Self { h, w, data: vec![value; h * w] }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), h * w, "grid data length must equal h*w");
        Self { h, w, data }
    }

    /// Builds the grid by evaluating `f(row, col)` for every cell.
    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                data.push(f(i, j));
            }
        }
        Self { h, w, data }
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.w + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.w + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.w..(i + 1) * self.w]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid2<U> {
        Grid2 { h: self.h, w: self.w, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

impl Grid2<f32> {
    /// Index of the minimum value, scanning row-major (first occurrence).
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.data.iter().enumerate() {
            if v < self.data[best] {
                best = k;
            }
        }
        (best / self.w, best % self.w)
    }

    /// Index of the maximum value, scanning row-major (first occurrence).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = k;
            }
        }
        (best / self.w, best % self.w)
    }

    /// Mean of all values, accumulated in f64.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}
