//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::buffer::{Real, TensorBuffer};

/// Kaiming gain for LeakyReLU: `sqrt(2 / (1 + slope^2))`.
pub fn leaky_relu_gain(slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}

/// Fan-in Kaiming-uniform fill: samples from `±gain * sqrt(3 / fan_in)`.
/// Biases stay zero; call only on weight tensors.
pub fn kaiming_uniform<E: Real>(t: &mut TensorBuffer<E>, fan_in: usize, gain: f64, rng: &mut ChaCha8Rng) {
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    for v in t.data_mut() {
        *v = E::from_f64(rng.gen_range(-bound..bound));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn values_stay_in_bound_and_are_seeded() {
        let mut a: TensorBuffer<f32> = TensorBuffer::zeros(vec![8, 4, 3, 3]);
        let mut b: TensorBuffer<f32> = TensorBuffer::zeros(vec![8, 4, 3, 3]);
        let fan_in = 4 * 9;
        let gain = leaky_relu_gain(0.2);
        kaiming_uniform(&mut a, fan_in, gain, &mut ChaCha8Rng::seed_from_u64(5));
        kaiming_uniform(&mut b, fan_in, gain, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let bound = (gain * (3.0 / fan_in as f64).sqrt()) as f32;
        assert!(a.data().iter().all(|v| v.abs() <= bound));
        assert!(a.data().iter().any(|&v| v != 0.0));
    }
}
