use serde::{Deserialize, Serialize};

use super::{Gradients, MlpNet};
use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive, got {}",
            self.learning_rate
        );
        ensure!(
            (0.0..1.0).contains(&self.beta1) && self.beta1 > 0.0,
            "beta1 must lie in (0, 1)"
        );
        ensure!(
            (0.0..1.0).contains(&self.beta2) && self.beta2 > 0.0,
            "beta2 must lie in (0, 1)"
        );
        ensure!(self.epsilon > 0.0, "epsilon must be positive");
        Ok(())
    }
}

/// Bias-corrected Adam moments for a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        })
    }

    pub fn for_net(config: AdamConfig, net: &MlpNet) -> Result<Self> {
        Self::new(config, &net.param_sizes())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moment_sizes(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        ensure!(
            params.len() == self.first.len() && grads.len() == self.first.len(),
            "adam expected {} tensors, got {} params and {} grads",
            self.first.len(),
            params.len(),
            grads.len()
        );
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            ensure!(
                p.len() == self.first[k].len() && g.len() == self.first[k].len(),
                "adam tensor {k} size mismatch"
            );
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut MlpNet, grads: &Gradients) -> Result<()> {
        let g = grads.tensors();
        let mut p = net.params_mut();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut state = AdamState::new(AdamConfig::new(1e-3, 0.9, 0.999), &[3]).unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        state.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_sign() {
        // m_hat = g, v_hat = g^2 on step one, so the update is lr * g / (|g| + eps).
        let mut cfg = AdamConfig::new(0.01, 0.9, 0.999);
        cfg.epsilon = 1e-300;
        let mut state = AdamState::new(cfg, &[4]).unwrap();
        let mut p = vec![0.0; 4];
        state.step(&mut [&mut p], &[&[3.0, -0.2, 1e-4, -50.0]]).unwrap();
        let expect = [-0.01, 0.01, -0.01, 0.01];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn gan_configuration_is_accepted() {
        let state = AdamState::new(AdamConfig::new(1e-4, 0.5, 0.999), &[2, 5]).unwrap();
        assert_eq!(state.moment_sizes(), vec![2, 5]);
        assert!(AdamState::new(AdamConfig::new(1e-4, 1.0, 0.999), &[1]).is_err());
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut state = AdamState::new(AdamConfig::new(1e-3, 0.9, 0.999), &[2]).unwrap();
        let mut p = vec![0.0; 3];
        assert!(state.step(&mut [&mut p], &[&[1.0, 1.0, 1.0]]).is_err());
        assert_eq!(state.step_count(), 0);
    }
}
