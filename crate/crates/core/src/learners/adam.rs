//! Adam with bias correction and a staircase exponential learning-rate decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative decay applied every `decay_steps` steps.
    pub decay_rate: f64,
    pub decay_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_rate: 0.95,
            decay_steps: 500,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    /// Learning rate used for the zero-based step `step`.
    pub fn effective_lr(&self, step: u64) -> f64 {
        let k = step.checked_div(self.decay_steps).unwrap_or(0);
        self.learning_rate * self.decay_rate.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// Number of completed steps.
    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One in-place Adam update of `params` along `grad`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, hyper: &AdamConfig) {
    debug_assert_eq!(params.len(), grad.len());
    let lr = hyper.effective_lr(state.step);
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}
