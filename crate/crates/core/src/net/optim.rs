use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias-corrected Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if state.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            actual: state.len(),
        });
    }
    state.step_count += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(state.step_count as i32);
    let bc2 = 1.0 - b2.powi(state.step_count as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Halves the learning rate when the epoch loss stops improving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub current_lr: f64,
    pub patience: usize,
    /// Relative improvement required to reset the patience counter.
    pub min_delta: f64,
    pub floor: f64,
    best: f64,
    wait: usize,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, patience: usize, min_delta: f64, floor: f64) -> Self {
        LrSchedule {
            current_lr: initial_lr,
            patience,
            min_delta,
            floor,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    /// Records one epoch loss and returns the learning rate for the next epoch.
    pub fn observe(&mut self, epoch_loss: f64) -> f64 {
        if epoch_loss < self.best * (1.0 - self.min_delta) {
            self.best = epoch_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.current_lr = (0.5 * self.current_lr).max(self.floor);
                self.wait = 0;
            }
        }
        self.current_lr
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::new(1e-3, 100, 1e-4, 1e-5)
    }
}
