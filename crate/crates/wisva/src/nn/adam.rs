//! Bias-corrected Adam over a fixed-order list of parameter tensors.

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First-moment buffers, one per parameter tensor in model order.
    pub m: Vec<Vec<f32>>,
    /// Second-moment buffers, mirroring `m`.
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(lr: f64, tensor_lens: &[usize]) -> Self {
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: tensor_lens.iter().map(|&l| vec![0.0; l]).collect(),
            v: tensor_lens.iter().map(|&l| vec![0.0; l]).collect(),
        }
    }
}

/// One Adam update across all parameter tensors. `params[i]` and `grads[i]`
/// must mirror the moment buffers created at [`AdamState::new`].
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut [f32]],
    grads: &[&[f32]],
) -> Result<(), NnError> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(NnError::ShapeMismatch(format!(
            "adam has {} moment buffers, got {} params / {} grads",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - state.beta1.powi(t);
    let corr2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (state.beta1 as f32, state.beta2 as f32);
    let lr = state.lr as f32;
    let eps = state.eps as f32;
    let (c1, c2) = (corr1 as f32, corr2 as f32);

    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.len() != state.m[idx].len() || g.len() != state.m[idx].len() {
            return Err(NnError::ShapeMismatch(format!(
                "adam tensor {idx}: moment len {} vs param {} / grad {}",
                state.m[idx].len(),
                p.len(),
                g.len()
            )));
        }
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(0.1, &[3]);
        let mut p = vec![1.0f32, -2.0, 0.5];
        let orig = p.clone();
        let g = vec![0.0f32; 3];
        adam_step(&mut state, &mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, orig);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn single_step_descends_quadratic() {
        let mut state = AdamState::new(0.1, &[1]);
        let mut p = vec![1.0f32];
        let g = vec![2.0 * p[0]];
        adam_step(&mut state, &mut [&mut p], &[&g]).unwrap();
        assert!(p[0] < 1.0);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        // f(p) = (p - 3)^2, grad = 2(p - 3).
        let mut state = AdamState::new(0.1, &[1]);
        let mut p = vec![0.0f32];
        for _ in 0..200 {
            let g = vec![2.0 * (p[0] - 3.0)];
            adam_step(&mut state, &mut [&mut p], &[&g]).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 0.05, "ended at {}", p[0]);
    }

    #[test]
    fn rejects_mismatched_tensor_lists() {
        let mut state = AdamState::new(0.1, &[2, 3]);
        let mut p = vec![0.0f32; 2];
        let g = vec![0.0f32; 2];
        assert!(adam_step(&mut state, &mut [&mut p], &[&g]).is_err());
    }
}
