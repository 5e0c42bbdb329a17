use super::{Parameter, Scalar};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(invalid!("{name} must be in [0, 1), got {b}"));
            }
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Gradients are zeroed
/// afterwards.
pub fn adam_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Parameter<T>>,
    cfg: &OptimizerConfig,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(invalid!("adam step index starts at 1"));
    }
    cfg.validate()?;
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let step = T::from_f64(cfg.lr / bc1);
    let inv_bc2 = T::from_f64(1.0 / bc2);
    let eps = T::from_f64(cfg.epsilon);
    for p in params {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            let m = b1 * p.m[i] + one_b1 * g;
            let v = b2 * p.v[i] + one_b2 * g * g;
            p.m[i] = m;
            p.v[i] = v;
            p.value[i] -= step * m / ((v * inv_bc2).sqrt() + eps);
        }
        p.zero_grad();
    }
    Ok(())
}
