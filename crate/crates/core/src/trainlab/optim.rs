use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First-order optimizer state over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, len: usize) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(invalid(format!("learning rate must be > 0, got {lr}")));
        }
        let state = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => len,
        };
        Ok(Optimizer {
            kind,
            lr,
            m: vec![0.0; state],
            v: vec![0.0; state],
            t: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one descent step along `grad` to `theta` in place.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != grad.len() {
            return Err(invalid("gradient length differs from theta"));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in theta.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != theta.len() {
                    return Err(invalid("optimizer state was sized for another model"));
                }
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..theta.len() {
                    let g = grad[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    theta[i] -= self.lr * mh / (vh.sqrt() + ADAM_EPS);
                }
            }
        }
        Ok(())
    }
}
