//! Adam optimizer over a [`ModelParams`] registry.

use alloc::vec::Vec;

use crate::fmath;
use crate::params::{GradStore, ModelParams};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::with_lr(1e-4)
    }
}

/// First/second moment estimates plus the step counter.
pub struct AdamState {
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let shape = |i: usize| {
            let t = params.tensor(i);
            Tensor2::zeros(t.rows, t.cols)
        };
        AdamState {
            m: (0..params.len()).map(shape).collect(),
            v: (0..params.len()).map(shape).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; zero gradients leave parameters at
/// their current values only when the state is also zero, as usual.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradStore,
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    assert_eq!(params.len(), grads.len(), "gradient store shape mismatch");
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - fmath::powi(cfg.beta1, t);
    let bc2 = 1.0 - fmath::powi(cfg.beta2, t);
    for i in 0..params.len() {
        let g = grads.grad(i);
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let p = params.tensor_mut(i);
        for k in 0..p.data.len() {
            let gk = g.data[k];
            m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
            v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
            let mh = m.data[k] / bc1;
            let vh = v.data[k] / bc2;
            p.data[k] -= cfg.lr * mh / (fmath::sqrt(vh) + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = ModelParams::new(0);
        p.register("w", 2, 2, Init::Uniform { bound: 1.0 });
        let before = p.flatten();
        let grads = GradStore::zeros_like(&p);
        let mut st = AdamState::zeros_like(&p);
        adam_step(&mut p, &grads, &mut st, &AdamConfig::with_lr(1e-2));
        assert_eq!(p.flatten(), before);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let mut p = ModelParams::new(0);
        p.register("w", 1, 1, Init::Zero);
        let mut grads = GradStore::zeros_like(&p);
        grads.grad_mut(0).data[0] = 3.0;
        let mut st = AdamState::zeros_like(&p);
        let cfg = AdamConfig::with_lr(1e-2);
        let mut prev = 0.0;
        for _ in 0..500 {
            prev = p.tensor(0).data[0];
            adam_step(&mut p, &grads, &mut st, &cfg);
        }
        let step = prev - p.tensor(0).data[0];
        // Steady-state step magnitude tends to lr for constant gradients.
        assert!((step - cfg.lr).abs() < 1e-4, "step = {step}");
    }

    #[test]
    fn quadratic_converges() {
        // f(x) = (x - 3)^2 / 2, gradient x - 3.
        let mut p = ModelParams::new(0);
        p.register("x", 1, 1, Init::Zero);
        let mut st = AdamState::zeros_like(&p);
        let cfg = AdamConfig::with_lr(1e-2);
        for _ in 0..2000 {
            let mut grads = GradStore::zeros_like(&p);
            grads.grad_mut(0).data[0] = p.tensor(0).data[0] - 3.0;
            adam_step(&mut p, &grads, &mut st, &cfg);
        }
        assert!((p.tensor(0).data[0] - 3.0).abs() < 1e-4);
    }
}
