use crate::error::{Error, Result};

use super::NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam with coupled L2 weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    first: NetworkParams,
    second: NetworkParams,
    steps: u64,
}

impl Adam {
    pub fn new(like: &NetworkParams, config: AdamConfig) -> Self {
        Adam {
            config,
            first: NetworkParams::zeros(like.arch),
            second: NetworkParams::zeros(like.arch),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !params.same_shape(grads) || !params.same_shape(&self.first) {
            return Err(Error::invalid("gradient shape does not match parameters"));
        }
        let AdamConfig { beta1, beta2, eps, weight_decay } = self.config;
        self.steps += 1;
        let bias1 = 1.0 - libm::pow(beta1, self.steps as f64);
        let bias2 = 1.0 - libm::pow(beta2, self.steps as f64);

        let moments = self.first.values_mut().zip(self.second.values_mut());
        for ((p, &g), (m, v)) in params.values_mut().zip(grads.values()).zip(moments) {
            let g = g + weight_decay * *p;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
        params.check_finite()
    }
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, elementwise.
pub fn ema_update(teacher: &mut NetworkParams, student: &NetworkParams, alpha: f64) -> Result<()> {
    if !teacher.same_shape(student) {
        return Err(Error::invalid("teacher and student shapes differ"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("EMA decay must lie in [0, 1]"));
    }
    for (t, &s) in teacher.values_mut().zip(student.values()) {
        *t = alpha * *t + (1.0 - alpha) * s;
    }
    teacher.check_finite()
}
