//! Minimal differentiable-layer substrate: dense 2D convolution, transposed
//! convolution, dense layers, activations, and Adam. Layers carry explicit
//! forward/backward passes with analytic gradients; the gradcheck harness
//! verifies them against central finite differences.
//!
//! Everything is generic over the element type so the training pipeline runs
//! f32 while gradient checks instantiate f64 (finite differences at h = 1e-3
//! are meaningless at f32 precision).

mod adam;
mod buffer;
mod conv;
mod dense;
mod gradcheck;
mod init;

pub use adam::{adam_step, AdamState};
pub use buffer::{Real, TensorBuffer};
pub use conv::{Conv2d, Conv2dGrads, ConvTranspose2d};
pub use dense::{Dense, DenseGrads};
pub use gradcheck::grad_check;
pub use init::{kaiming_uniform, leaky_relu_gain};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// LeakyReLU forward.
pub fn leaky_relu<E: Real>(x: &TensorBuffer<E>, slope: E) -> TensorBuffer<E> {
    x.map(|v| if v > E::zero() { v } else { v * slope })
}

/// LeakyReLU input gradient; `x` is the forward input.
pub fn leaky_relu_backward<E: Real>(
    x: &TensorBuffer<E>,
    gy: &TensorBuffer<E>,
    slope: E,
) -> TensorBuffer<E> {
    debug_assert_eq!(x.dims(), gy.dims());
    let data = x
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&xv, &g)| if xv > E::zero() { g } else { g * slope })
        .collect();
    TensorBuffer::from_vec(x.dims().to_vec(), data)
}

/// Logistic sigmoid forward.
pub fn sigmoid<E: Real>(x: &TensorBuffer<E>) -> TensorBuffer<E> {
    x.map(|v| E::one() / (E::one() + (-v).exp()))
}

/// Sigmoid input gradient; `y` is the forward output.
pub fn sigmoid_backward<E: Real>(y: &TensorBuffer<E>, gy: &TensorBuffer<E>) -> TensorBuffer<E> {
    debug_assert_eq!(y.dims(), gy.dims());
    let data = y
        .data()
        .iter()
        .zip(gy.data())
        .map(|(&yv, &g)| g * yv * (E::one() - yv))
        .collect();
    TensorBuffer::from_vec(y.dims().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_roundtrip_shapes() {
        let x = TensorBuffer::from_vec(vec![2, 2], vec![-1.0f64, 0.5, 2.0, -0.25]);
        let y = leaky_relu(&x, 0.2);
        assert_eq!(y.data(), &[-0.2, 0.5, 2.0, -0.05]);
        let s = sigmoid(&TensorBuffer::from_vec(vec![1, 1], vec![0.0f64]));
        assert_eq!(s.data(), &[0.5]);
    }
}
