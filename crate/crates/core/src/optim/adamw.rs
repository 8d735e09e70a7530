use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine decay `lr0 · ½(1 + cos(πt/T))`.
pub fn cosine_lr(t: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 || t > total {
        return Err(Error::Argument(format!("schedule step {t} outside [0, {total}]")));
    }
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    /// Cosine decay to zero over `total` steps.
    Cosine {
        total: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            schedule: Schedule::Constant,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::config("protocol.adamw.lr0", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("protocol.adamw.betas", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("protocol.adamw.eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("protocol.adamw.weight_decay", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub step: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamWConfig,
}

impl AdamWState {
    pub fn new(n: usize, config: AdamWConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            config,
        }
    }

    /// Rate applied by the next call to [`AdamWState::step`].
    pub fn lr(&self) -> f64 {
        match self.config.schedule {
            Schedule::Constant => self.config.lr0,
            Schedule::Cosine { total } => cosine_lr(self.step.min(total), total.max(1), self.config.lr0).unwrap_or(0.0),
        }
    }

    /// One decoupled-weight-decay Adam update. Frozen entries are left
    /// untouched, including their moments.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], frozen: Option<&[bool]>) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                what: "optimizer state",
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                reason: format!("non-finite gradient entry {k}"),
                breakdown: None,
            });
        }
        let lr = self.lr();
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for k in 0..params.len() {
            if frozen.is_some_and(|f| f[k]) {
                continue;
            }
            let g = grads[k];
            params[k] *= 1.0 - lr * c.weight_decay;
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
            let mhat = self.m[k] / bc1;
            let vhat = self.v[k] / bc2;
            params[k] -= lr * mhat / (vhat.sqrt() + c.eps);
        }
        Ok(())
    }
}
