//! Adam with bias-corrected first and second moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::{ParamId, ParamSet};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Optimizer state: moment buffers per parameter plus the 1-based step count
/// that drives bias correction. State persists across steps.
pub struct Adam {
    config: OptimizerConfig,
    step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: OptimizerConfig, params: &ParamSet, ids: &[ParamId]) -> Self {
        let first = ids.iter().map(|&id| vec![0.0; params.get(id).numel()]).collect();
        let second = ids.iter().map(|&id| vec![0.0; params.get(id).numel()]).collect();
        Adam { config, step: 0, first, second }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update over `ids` (the same list, in the same order, on every
    /// call). Gradients must have been populated by a backward pass.
    pub fn step(&mut self, params: &mut ParamSet, ids: &[ParamId]) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);
        for (slot, &id) in ids.iter().enumerate() {
            let tensor = params.get_mut(id);
            if !tensor.requires_grad() || tensor.grad().is_none() {
                return Err(Error::config(format!("adam: parameter {slot} has no gradient")));
            }
            let grad = tensor.grad().unwrap().to_vec();
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            let data = tensor.data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                data[i] -= c.alpha * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
