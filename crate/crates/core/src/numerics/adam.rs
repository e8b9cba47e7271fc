//! Adam optimizer with bias correction.
//!
//! Moments are kept per parameter slot so that a training step touching a
//! subset of the parameters (truncated-depth forward passes) leaves every
//! other slot's state and values untouched.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    steps: Vec<u64>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            steps: vec![0; shapes.len()],
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self, slot: usize) -> u64 {
        self.steps[slot]
    }

    /// Applies one Adam update to the given slots. `params[i]` and
    /// `grads[i]` must both belong to `slots[i]`.
    pub fn step(
        &mut self,
        slots: &[usize],
        params: &mut [&mut Matrix],
        grads: &[&Matrix],
    ) -> Result<()> {
        if slots.len() != params.len() || slots.len() != grads.len() {
            return Err(Error::invalid("adam step arity mismatch"));
        }
        for ((&slot, param), grad) in slots.iter().zip(params.iter_mut()).zip(grads.iter()) {
            if !param.same_shape(grad) {
                return Err(Error::invalid(format!(
                    "adam slot {slot}: parameter {}x{} vs gradient {}x{}",
                    param.rows(),
                    param.cols(),
                    grad.rows(),
                    grad.cols()
                )));
            }
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient for adam slot {slot}")));
            }
            self.steps[slot] += 1;
            let t = self.steps[slot] as i32;
            let bc1 = 1.0 - BETA1.powi(t);
            let bc2 = 1.0 - BETA2.powi(t);
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()))
            {
                *mi = BETA1 * *mi + (1.0 - BETA1) * g;
                *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}
