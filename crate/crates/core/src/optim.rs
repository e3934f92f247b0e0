//! Adam over a flat parameter vector.

/// Hyperparameters of the update. `weight_decay` is applied as an L2 term
/// added to the gradient before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i] + c.weight_decay * params[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(lr: f64, wd: f64) -> AdamConfig {
        AdamConfig {
            lr,
            weight_decay: wd,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(3, config(0.01, 0.0));
        let mut params = vec![1.0, -2.0, 0.5];
        state.step(&mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_roughly_lr_in_sign_direction() {
        // After bias correction the first update is lr * g / (|g| + eps).
        let mut state = AdamState::new(2, config(0.01, 0.0));
        let mut params = vec![0.0, 0.0];
        state.step(&mut params, &[3.0, -0.2]);
        assert_abs_diff_eq!(params[0], -0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(params[1], 0.01, epsilon = 1e-9);
    }

    #[test]
    fn weight_decay_pulls_toward_zero_without_gradient() {
        let mut state = AdamState::new(1, config(0.01, 0.1));
        let mut params = vec![5.0];
        state.step(&mut params, &[0.0]);
        assert!(params[0] < 5.0);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut state = AdamState::new(2, AdamConfig::default());
            let mut params = vec![0.3, -0.7];
            for i in 0..50 {
                let g = [params[0] * 2.0 + i as f64 * 0.01, params[1].sin()];
                state.step(&mut params, &g);
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut state = AdamState::new(2, config(0.05, 0.0));
        let mut params = vec![3.0, -4.0];
        for _ in 0..2000 {
            let g = [2.0 * params[0], 2.0 * params[1]];
            state.step(&mut params, &g);
        }
        assert!(params[0].abs() < 1e-3 && params[1].abs() < 1e-3);
    }
}
