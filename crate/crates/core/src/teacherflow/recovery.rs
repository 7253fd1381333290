use serde::{Deserialize, Serialize};

use super::dataset::{unlift, TeacherDataset};
use super::{teacher_field, TeacherSpec};
use crate::error::{invalid, shape_err, Result};
use crate::fieldmetrics::{accuracy, solver_consistency};
use crate::gradcore::{Rng, Tensor};
use crate::netzoo::{Family, FieldModel};
use crate::odesolve::{integrate, SolverSpec};

/// A classifier whose hidden state follows a latent flow comparable to the
/// teacher's.
pub trait FlowModel {
    /// Latent states at the `intervals + 1` sample times.
    fn latent_path(&self, x: &Tensor, intervals: usize) -> Result<Vec<Tensor>>;
    fn field(&self, z: &Tensor, t: f64) -> Result<Tensor>;
    fn logits(&self, x: &Tensor) -> Result<Tensor>;
    /// Output change under re-discretization of the flow.
    fn reparam_error(&self, x: &Tensor) -> Result<f64>;
}

fn subsample(path: Vec<Tensor>, intervals: usize) -> Result<Vec<Tensor>> {
    let steps = path.len() - 1;
    if steps % intervals != 0 {
        return Err(invalid(format!(
            "{steps} flow steps do not align with {intervals} sample intervals"
        )));
    }
    let every = steps / intervals;
    Ok(path.into_iter().step_by(every).collect())
}

impl FlowModel for FieldModel {
    fn latent_path(&self, x: &Tensor, intervals: usize) -> Result<Vec<Tensor>> {
        subsample(self.forward(x)?.hidden, intervals)
    }

    fn field(&self, z: &Tensor, t: f64) -> Result<Tensor> {
        self.vector_field(z, t)
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        FieldModel::logits(self, x)
    }

    /// Solver consistency over the trained grid and its 2× and 4× refinements.
    fn reparam_error(&self, x: &Tensor) -> Result<f64> {
        if self.family() != Family::Continuous {
            return Err(invalid("re-discretization needs a continuous model"));
        }
        let spec = self.config().solver.expect("validated continuous config");
        solver_consistency(
            self,
            x,
            &[
                spec,
                spec.with_steps(2 * spec.steps),
                spec.with_steps(4 * spec.steps),
            ],
        )
    }
}

/// The teacher itself, decoding inputs exactly; classifies task A.
#[derive(Clone, Debug)]
pub struct TeacherOracle {
    spec: TeacherSpec,
    lift: Tensor,
    label_dir: Vec<f64>,
}

impl TeacherOracle {
    pub fn new(data: &TeacherDataset) -> Self {
        let mut r = Rng::new(data.spec.obs_seed).stream("label");
        TeacherOracle {
            spec: data.spec.clone(),
            lift: data.lift().clone(),
            label_dir: (0..data.spec.latent_dim).map(|_| r.normal()).collect(),
        }
    }

    fn rollout(&self, x: &Tensor, spec: &SolverSpec) -> Result<Vec<Tensor>> {
        let z0 = unlift(x, &self.lift)?;
        Ok(integrate(|z: &Tensor, t| teacher_field(z, t, &self.spec), &z0, spec)?.into_states())
    }
}

impl FlowModel for TeacherOracle {
    fn latent_path(&self, x: &Tensor, intervals: usize) -> Result<Vec<Tensor>> {
        subsample(self.rollout(x, &self.spec.reference_solver())?, intervals)
    }

    fn field(&self, z: &Tensor, t: f64) -> Result<Tensor> {
        teacher_field(z, t, &self.spec)
    }

    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let path = self.rollout(x, &self.spec.reference_solver())?;
        let last = path.last().expect("states");
        let mut out = Tensor::zeros(&[x.rows(), 2]);
        for r in 0..x.rows() {
            let s: f64 = last
                .row_slice(r)
                .iter()
                .zip(&self.label_dir)
                .map(|(a, b)| a * b)
                .sum();
            out.set(r, 1, s);
        }
        Ok(out)
    }

    fn reparam_error(&self, x: &Tensor) -> Result<f64> {
        let spec = self.spec.reference_solver();
        let a = self.rollout(x, &spec)?;
        let b = self.rollout(x, &spec.with_steps(2 * spec.steps))?;
        let diff = a.last().expect("states").sub(b.last().expect("states"))?;
        Ok(diff.norm() / (x.rows() as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRecovery {
    pub accuracy: f64,
    pub traj_rmse: f64,
    pub deriv_rmse: f64,
    pub reparam: f64,
}

/// `sqrt(mean_{k, rows} ‖a − b‖²)`.
pub(crate) fn path_rmse(a: &[Tensor], b: &[Tensor]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(shape_err(
            "path_rmse",
            format!("{} vs {} states", a.len(), b.len()),
        ));
    }
    let mut total = 0.0;
    for (p, q) in a.iter().zip(b) {
        total += p.sub(q)?.norm_sq();
    }
    Ok((total / (a.len() * a[0].rows()) as f64).sqrt())
}

/// Accuracy, trajectory and derivative RMSE against the teacher, and the
/// model's re-discretization error.
pub fn evaluate_field_recovery<M: FlowModel>(
    m: &M,
    data: &TeacherDataset,
) -> Result<FieldRecovery> {
    let k = data.spec.intervals;
    let path = m.latent_path(&data.x, k)?;
    if path[0].cols() != data.spec.latent_dim {
        return Err(shape_err(
            "evaluate_field_recovery",
            format!(
                "model latent dim {} vs teacher {}",
                path[0].cols(),
                data.spec.latent_dim
            ),
        ));
    }
    let traj_rmse = path_rmse(&path, &data.states)?;
    let times = data.spec.sample_times();
    let fields = data
        .states
        .iter()
        .zip(&times)
        .map(|(z, &t)| m.field(z, t))
        .collect::<Result<Vec<_>>>()?;
    let deriv_rmse = path_rmse(&fields, &data.derivs)?;
    Ok(FieldRecovery {
        accuracy: accuracy(&m.logits(&data.x)?, &data.labels)?,
        traj_rmse,
        deriv_rmse,
        reparam: m.reparam_error(&data.x)?,
    })
}
