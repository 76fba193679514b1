//! SGD and Adam over a flat parameter vector.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptKind {
    Sgd,
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

#[derive(Clone, Debug)]
pub struct OptState {
    pub kind: OptKind,
    pub lr: f32,
    /// First/second moment buffers; sized on first step.
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl OptState {
    pub fn sgd(lr: f32) -> Self {
        OptState {
            kind: OptKind::Sgd,
            lr,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    /// Adam with the standard defaults beta1 = 0.9, beta2 = 0.999, eps = 1e-8
    /// and bias-corrected moments.
    pub fn adam(lr: f32) -> Self {
        OptState {
            kind: OptKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            lr,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One in-place update. Rejects non-finite gradients without touching the
    /// parameters, and rejects a length mismatch with the moment buffers.
    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch {
                op: "optimizer_step",
                expected: format!("[{}]", params.len()),
                got: format!("[{}]", grads.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("optimizer_step gradients".into()));
        }
        match self.kind {
            OptKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            OptKind::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                } else if self.m.len() != params.len() {
                    return Err(Error::ShapeMismatch {
                        op: "optimizer_step",
                        expected: format!("[{}] (moment buffers)", self.m.len()),
                        got: format!("[{}]", params.len()),
                    });
                }
                let t = (self.step + 1) as f32;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    params[i] -= self.lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
