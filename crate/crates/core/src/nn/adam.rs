//! Adam optimizer with an exponentially decaying learning rate.

use super::NnError;

/// Exponential decay from `lr_start` to `lr_end` over `total_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    /// The default training schedule: 1e-3 decaying to 1e-5.
    pub fn decaying(total_steps: usize) -> LrSchedule {
        LrSchedule {
            lr_start: 1e-3,
            lr_end: 1e-5,
            total_steps,
        }
    }

    pub fn constant(lr: f64) -> LrSchedule {
        LrSchedule {
            lr_start: lr,
            lr_end: lr,
            total_steps: 1,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if self.lr_start == self.lr_end || self.total_steps <= 1 {
            return self.lr_start;
        }
        let t = (step as f64 / (self.total_steps - 1).max(1) as f64).min(1.0);
        self.lr_start * (self.lr_end / self.lr_start).powf(t)
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, schedule: LrSchedule) -> AdamState {
        AdamState {
            schedule,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One Adam update in place. The learning rate comes from the schedule at
/// the current step counter.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(NnError::ShapeMismatch(format!(
            "adam buffers hold {} params, got {} params / {} grads",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    let lr = state.schedule.at(state.step);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
