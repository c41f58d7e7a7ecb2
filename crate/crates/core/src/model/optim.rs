//! Client-side optimizers.

use serde::{Deserialize, Serialize};

use super::ParameterVector;
use crate::error::{FedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd | adam)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl LocalOptimizerConfig {
    pub fn adam() -> Self {
        LocalOptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            local_epochs: 1,
        }
    }

    pub fn sgd() -> Self {
        LocalOptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.01,
            ..Self::adam()
        }
    }

    /// `learning_rate` may be zero so a round can be run as a no-op.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(FedError::config("local.learning_rate", "must be a finite value >= 0"));
        }
        for (key, beta) in [("local.beta1", self.adam_beta1), ("local.beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(FedError::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(FedError::config("local.epsilon", "must be > 0"));
        }
        if self.batch_size < 1 {
            return Err(FedError::config("local.batch_size", "must be >= 1"));
        }
        if self.local_epochs < 1 {
            return Err(FedError::config("local.local_epochs", "must be >= 1"));
        }
        Ok(())
    }
}

impl Default for LocalOptimizerConfig {
    fn default() -> Self {
        Self::adam()
    }
}

/// `params -= lr * grad`
pub fn sgd_step(params: &mut ParameterVector, grad: &ParameterVector, learning_rate: f64) {
    for (p, g) in params.as_mut_slice().iter_mut().zip(grad.iter()) {
        *p -= learning_rate * g;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParameterVector,
    grad: &ParameterVector,
    state: &mut AdamState,
    cfg: &LocalOptimizerConfig,
) {
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let lr = cfg.learning_rate;
    let eps = cfg.adam_epsilon;
    for (((p, &g), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grad.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Optimizer for one local training call; state starts fresh each round.
#[derive(Debug, Clone)]
pub struct LocalOptimizer {
    cfg: LocalOptimizerConfig,
    adam: Option<AdamState>,
}

/// The gradient held a NaN or infinity at `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteGradient {
    pub index: usize,
}

impl LocalOptimizer {
    pub fn new(cfg: &LocalOptimizerConfig, num_params: usize) -> Self {
        let adam = (cfg.kind == OptimizerKind::Adam).then(|| AdamState::new(num_params));
        LocalOptimizer {
            cfg: cfg.clone(),
            adam,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParameterVector,
        grad: &ParameterVector,
    ) -> std::result::Result<(), NonFiniteGradient> {
        if let Some(index) = grad.first_non_finite() {
            return Err(NonFiniteGradient { index });
        }
        match &mut self.adam {
            Some(state) => adam_step(params, grad, state, &self.cfg),
            None => sgd_step(params, grad, self.cfg.learning_rate),
        }
        Ok(())
    }
}
