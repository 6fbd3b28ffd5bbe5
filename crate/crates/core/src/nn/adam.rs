use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::ParamTensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }
}

/// Adam with bias-corrected moments. One state per parameter group; the
/// group's tensors must be passed in the same order on every step.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&ParamTensor]) -> Self {
        Self {
            config,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &[f64]> {
        self.second.iter().map(Vec::as_slice)
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn update(&mut self, mut params: Vec<&mut ParamTensor>) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Logic(format!(
                "Adam state tracks {} tensors, update got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.len() != self.first[i].len() {
                return Err(Error::Logic(format!(
                    "Adam tensor {i} changed length from {} to {}",
                    self.first[i].len(),
                    p.len()
                )));
            }
            if let Some(g) = p.grad().iter().find(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {g} in tensor {i}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let (values, grad) = p.values_and_grad_mut();
            for j in 0..values.len() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                values[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                grad[j] = 0.0;
            }
        }
        Ok(())
    }
}
