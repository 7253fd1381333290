use super::dataset::TeacherDataset;
use super::recovery::evaluate_field_recovery;
use crate::error::{invalid, Result};
use crate::fieldlosses::{loss_deriv_ops, loss_solver_ops, loss_task, loss_traj_ops, LossWeights};
use crate::gradcore::{Ops, Tape, Tensor, Var};
use crate::netzoo::{Family, FieldModel, ParamSet};
use crate::trainlab::{EpochMetrics, FieldMode, LossRequest, LossVars, Objective};

/// Segment-wise shooting penalty.
///
/// `[0, T]` is cut into `segments` pieces on the sample grid. The first
/// piece starts from the encoded state `h0`, later pieces from the teacher
/// state at their left end; each piece's end is compared with the teacher
/// state where the next piece starts. One segment is the terminal
/// trajectory loss.
pub fn shooting_loss_ops<O: Ops>(
    ops: &O,
    m: &FieldModel,
    p: &[O::V],
    x: &O::V,
    h0: &O::V,
    teacher: &[Tensor],
    segments: usize,
) -> Result<O::V> {
    let k = teacher.len().saturating_sub(1);
    if segments == 0 || segments > k {
        return Err(invalid(format!("need 1..={k} segments, got {segments}")));
    }
    let layers = m.num_layers();
    if layers % k != 0 {
        return Err(invalid(format!(
            "{layers} flow steps do not align with {k} intervals"
        )));
    }
    let per = layers / k;
    let bounds: Vec<usize> = (0..=segments)
        .map(|s| ((s * k) as f64 / segments as f64).round() as usize)
        .collect();
    let rows = ops.shape(h0)[0] as f64;
    let mut total: Option<O::V> = None;
    for s in 0..segments {
        let mut h = if s == 0 {
            h0.clone()
        } else {
            ops.constant(teacher[bounds[s]].clone())?
        };
        for l in bounds[s] * per..bounds[s + 1] * per {
            h = m.step_ops(ops, p, l, &h, x)?;
        }
        let target = ops.constant(teacher[bounds[s + 1]].clone())?;
        let term = ops.sum(&ops.square(&ops.sub(&h, &target)?)?)?;
        total = Some(match total {
            Some(t) => ops.add(&t, &term)?,
            None => term,
        });
    }
    ops.scale(&total.expect("segments >= 1"), 1.0 / rows)
}

/// Classification plus teacher supervision for a continuous flow model
/// whose hidden width equals the teacher's latent dimension.
///
/// Field term: `α·traj + β·deriv + γ·solver` (full), derivative matching at
/// teacher states (local), or the shooting penalty (segments).
pub struct TeacherObjective<'a> {
    model: FieldModel,
    train: &'a TeacherDataset,
    eval: &'a TeacherDataset,
    weights: LossWeights,
}

impl<'a> TeacherObjective<'a> {
    pub fn new(
        model: &FieldModel,
        train: &'a TeacherDataset,
        eval: &'a TeacherDataset,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        if model.family() != Family::Continuous {
            return Err(invalid("teacher training needs a continuous model"));
        }
        if model.config().hidden_dim != train.spec.latent_dim {
            return Err(invalid(
                "model hidden width must equal the teacher latent dim",
            ));
        }
        if model.num_layers() % train.spec.intervals != 0 {
            return Err(invalid(
                "model steps must be a multiple of the sample intervals",
            ));
        }
        Ok(TeacherObjective {
            model: model.clone(),
            train,
            eval,
            weights,
        })
    }

    pub fn model_with(&self, params: &ParamSet) -> Result<FieldModel> {
        let mut m = self.model.clone();
        m.set_theta(params.theta())?;
        Ok(m)
    }

    fn has_field(&self, mode: FieldMode) -> bool {
        let w = &self.weights;
        match mode {
            FieldMode::Full => w.alpha > 0.0 || w.beta > 0.0 || w.gamma > 0.0,
            FieldMode::LocalMatch | FieldMode::Shooting { .. } => true,
        }
    }
}

fn accumulate(tape: &Tape, acc: Option<Var>, term: Var, w: f64) -> Result<Option<Var>> {
    let t = tape.scale(&term, w)?;
    Ok(Some(match acc {
        Some(a) => tape.add(&a, &t)?,
        None => t,
    }))
}

impl Objective for TeacherObjective<'_> {
    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn losses(&self, tape: &Tape, p: &[Var], req: &LossRequest) -> Result<LossVars> {
        let m = &self.model;
        let (x, states, derivs, labels) = self.train.select(req.batch)?;
        let xv = tape.constant(x.clone())?;
        let pass = m.forward_ops(tape, p, &xv)?;
        let task = if req.task {
            Some(loss_task(tape, &pass.logits, &labels)?)
        } else {
            None
        };
        let mut field = None;
        if req.field && self.has_field(req.mode) {
            let w = &self.weights;
            let or_one = |v: f64| if v > 0.0 { v } else { 1.0 };
            let times = self.train.spec.sample_times();
            let teacher_states = || -> Result<Vec<Var>> {
                states.iter().map(|s| tape.constant(s.clone())).collect()
            };
            let vf = |z: &Var, t: f64| m.vector_field_ops(tape, p, z, t);
            match req.mode {
                FieldMode::Full => {
                    if w.alpha > 0.0 {
                        let every = m.num_layers() / self.train.spec.intervals;
                        let pred: Vec<Var> = pass.hidden.iter().step_by(every).cloned().collect();
                        field =
                            accumulate(tape, field, loss_traj_ops(tape, &pred, &states)?, w.alpha)?;
                    }
                    if w.beta > 0.0 {
                        let d = loss_deriv_ops(tape, vf, &teacher_states()?, &times, &derivs)?;
                        field = accumulate(tape, field, d, w.beta)?;
                    }
                    if w.gamma > 0.0 {
                        let spec = m.config().solver.expect("continuous");
                        let s = loss_solver_ops(
                            tape,
                            m,
                            p,
                            &xv,
                            &spec,
                            &spec.with_steps(2 * spec.steps),
                        )?;
                        field = accumulate(tape, field, s, w.gamma)?;
                    }
                }
                FieldMode::LocalMatch => {
                    let d = loss_deriv_ops(tape, vf, &teacher_states()?, &times, &derivs)?;
                    field = accumulate(tape, field, d, or_one(w.beta))?;
                }
                FieldMode::Shooting { segments } => {
                    let s = shooting_loss_ops(tape, m, p, &xv, &pass.hidden[0], &states, segments)?;
                    field = accumulate(tape, field, s, or_one(w.alpha))?;
                }
            }
        }
        Ok(LossVars { task, field })
    }

    fn evaluate(&self, params: &ParamSet) -> Result<EpochMetrics> {
        let r = evaluate_field_recovery(&self.model_with(params)?, self.eval)?;
        Ok(EpochMetrics {
            accuracy: Some(r.accuracy),
            traj_rmse: Some(r.traj_rmse),
            deriv_rmse: Some(r.deriv_rmse),
            reparam: Some(r.reparam),
        })
    }
}
