//! Adam with bias correction, plus plain SGD for comparison runs.

use crate::nn::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Default coefficients (0.9, 0.999, 1e-8).
    pub fn new(shapes: &[usize]) -> Self {
        Self::with_coefficients(shapes, 0.9, 0.999, 1e-8)
    }

    pub fn with_coefficients(shapes: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, _, d)| d.len()).collect();
        Self::new(&shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over a list of parameter tensors.
    pub fn step_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert!(lr > 0.0, "learning rate must be positive");
        assert_eq!(params.len(), self.m.len(), "tensor count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), m.len(), "tensor shape mismatch");
            assert_eq!(g.len(), m.len(), "gradient shape mismatch");
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Adam update on model parameters; increments the step counter.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
    let grad_views: Vec<&[f64]> = match grads {
        ModelParams::Mlp(m) => m.tensor_views(),
        ModelParams::Conv(c) => c.tensor_views(),
    };
    let mut param_views = params.tensors_mut();
    state.step_slices(&mut param_views, &grad_views, lr);
}

/// Plain gradient descent step.
pub fn sgd_step(params: &mut ModelParams, grads: &ModelParams, lr: f64) {
    assert!(lr > 0.0, "learning rate must be positive");
    params.axpy(-lr, grads);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpParams;

    #[test]
    fn zero_gradients_leave_params_fixed_and_moments_decay() {
        let mut params = ModelParams::Mlp(MlpParams::new_seeded(&[2, 3, 1], 1));
        let before = params.clone();
        let grads = params.zeros_like();
        let mut st = AdamState::for_params(&params);
        for _ in 0..5 {
            adam_step(&mut st, &mut params, &grads, 0.1);
        }
        assert_eq!(params, before);
        assert!(st.m.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = ModelParams::Mlp(MlpParams::new_zeros(&[1, 2]));
        let mut grads = params.zeros_like();
        grads.tensors_mut()[0].copy_from_slice(&[3.0, -0.25]);
        let mut st = AdamState::for_params(&params);
        adam_step(&mut st, &mut params, &grads, 0.01);
        let w = params.tensors();
        let (w0, w1) = (w[0].2[0], w[0].2[1]);
        // bias-corrected first step is -lr * g/(|g| + eps') ~ -lr * sign(g)
        assert!((w0 + 0.01).abs() < 1e-6, "w0 = {w0}");
        assert!((w1 - 0.01).abs() < 1e-6, "w1 = {w1}");
    }

    #[test]
    fn three_step_trajectory_matches_scalar_reference() {
        // scalar oracle with g = 1 at every step
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            expected.push(x);
        }

        let mut params = ModelParams::Mlp(MlpParams::new_zeros(&[1, 1]));
        let mut grads = params.zeros_like();
        grads.tensors_mut()[0][0] = 1.0;
        let mut st = AdamState::for_params(&params);
        for e in &expected {
            adam_step(&mut st, &mut params, &grads, lr);
            let got = params.tensors()[0].2[0];
            assert!((got - e).abs() < 1e-15, "got {got}, expected {e}");
        }
    }
}
