//! Synthetic latent-ODE teacher with a known vector field.
//!
//! A latent state `z ∈ ℝⁿ` follows `dz/dt = ω R⊥ z − a z + g tanh(z)`;
//! inputs are the lifted initial state `x = tanh(z₀ P)`. Labels read the
//! terminal state (task A) or blend it with the winding of the path
//! (task B), so the ground truth trajectory and derivatives are known
//! exactly for every sample.

mod dataset;
mod objective;
mod recovery;

pub use dataset::{generate_dataset, Task, TeacherDataset, TeacherSample};
pub use objective::{shooting_loss_ops, TeacherObjective};
pub use recovery::{evaluate_field_recovery, FieldRecovery, FlowModel, TeacherOracle};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::gradcore::Tensor;
use crate::odesolve::{Method, SolverSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSpec {
    pub latent_dim: usize,
    pub omega: f64,
    pub contraction: f64,
    pub gain: f64,
    pub horizon: f64,
    /// Number of sample intervals K; sample times are `t_k = kT/K`.
    pub intervals: usize,
    pub obs_dim: usize,
    /// Scale of the random lift before the tanh.
    pub lift_scale: f64,
    pub obs_seed: u64,
    /// Reference RK4 sub-steps per sample interval.
    pub substeps: usize,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec {
            latent_dim: 2,
            omega: 1.0,
            contraction: 0.3,
            gain: 0.5,
            horizon: 1.0,
            intervals: 10,
            obs_dim: 16,
            lift_scale: 0.3,
            obs_seed: 0,
            substeps: 100,
        }
    }
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.obs_dim < self.latent_dim {
            return Err(invalid("need 0 < latent_dim <= obs_dim"));
        }
        if self.intervals < 2 {
            return Err(invalid("need at least 2 sample intervals"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon must be > 0"));
        }
        if ![self.omega, self.contraction, self.gain, self.lift_scale]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(invalid("teacher coefficients must be finite"));
        }
        if self.substeps < 10 {
            return Err(invalid(
                "reference integration needs >= 10 sub-steps per interval",
            ));
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.intervals)
            .map(|k| self.horizon * k as f64 / self.intervals as f64)
            .collect()
    }

    /// Fine RK4 grid used for the ground truth.
    pub fn reference_solver(&self) -> SolverSpec {
        SolverSpec {
            method: Method::Rk4,
            steps: self.intervals * self.substeps,
            t0: 0.0,
            t1: self.horizon,
        }
    }
}

/// `f★(z) = ω R⊥ z − a z + g tanh(z)` row-wise; `R⊥` rotates each
/// coordinate pair `(z₁, z₂) ↦ (−z₂, z₁)` and leaves an odd last coordinate.
pub fn teacher_field(z: &Tensor, _t: f64, spec: &TeacherSpec) -> Result<Tensor> {
    if z.shape().len() != 2 || z.cols() != spec.latent_dim {
        return Err(shape_err(
            "teacher_field",
            format!("state {:?}, latent dim {}", z.shape(), spec.latent_dim),
        ));
    }
    let n = spec.latent_dim;
    let mut out = Tensor::zeros(z.shape());
    for r in 0..z.rows() {
        let row = z.row_slice(r);
        for c in 0..n {
            let rot = if c % 2 == 0 {
                if c + 1 < n {
                    -row[c + 1]
                } else {
                    0.0
                }
            } else {
                row[c - 1]
            };
            let v = spec.omega * rot - spec.contraction * row[c] + spec.gain * row[c].tanh();
            out.set(r, c, v);
        }
    }
    Ok(out)
}
