use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::combine::{cosine, mgda_combine, pcgrad_combine, projected_task_step, sum_combine};
use super::optim::{Optimizer, OptimizerKind};
use crate::error::{invalid, FieldError, Result};
use crate::gradcore::{Rng, Tape, Var};
use crate::netzoo::ParamSet;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Fullbptt,
    SegmentShooting,
    LocalFieldMatch,
    Pcgrad,
    Mgda,
    Curriculum,
    Alternating,
    ProjectedTask,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Fullbptt,
        Algorithm::SegmentShooting,
        Algorithm::LocalFieldMatch,
        Algorithm::Pcgrad,
        Algorithm::Mgda,
        Algorithm::Curriculum,
        Algorithm::Alternating,
        Algorithm::ProjectedTask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fullbptt => "fullbptt",
            Algorithm::SegmentShooting => "segment_shooting",
            Algorithm::LocalFieldMatch => "local_field_match",
            Algorithm::Pcgrad => "pcgrad",
            Algorithm::Mgda => "mgda",
            Algorithm::Curriculum => "curriculum",
            Algorithm::Alternating => "alternating",
            Algorithm::ProjectedTask => "projected_task",
        }
    }
}

/// Which field objective an [`Objective`] should build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldMode {
    /// Supervision along the full unrolled trajectory.
    Full,
    /// Derivative matching at reference states only.
    LocalMatch,
    /// Per-segment integration from reference states with continuity penalties.
    Shooting { segments: usize },
}

/// One loss evaluation request.
#[derive(Clone, Copy, Debug)]
pub struct LossRequest<'a> {
    pub batch: &'a [usize],
    pub mode: FieldMode,
    pub task: bool,
    pub field: bool,
}

/// Scalars recorded on the tape; `None` when not requested or not defined.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossVars {
    pub task: Option<Var>,
    pub field: Option<Var>,
}

/// Evaluation summary logged into the training history.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub accuracy: Option<f64>,
    pub traj_rmse: Option<f64>,
    pub deriv_rmse: Option<f64>,
    pub reparam: Option<f64>,
}

/// A training problem over a flat parameter vector.
///
/// `losses` receives the parameters already bound on `tape` in [`ParamSet`]
/// order; the field term is returned unweighted by the trainer's
/// `field_weight`.
pub trait Objective {
    fn num_samples(&self) -> usize;

    fn losses(&self, tape: &Tape, params: &[Var], req: &LossRequest) -> Result<LossVars>;

    fn evaluate(&self, _params: &ParamSet) -> Result<EpochMetrics> {
        Ok(EpochMetrics::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub algorithm: Algorithm,
    /// Multiplier on the objective's field term.
    pub field_weight: f64,
    /// Segment count for segment shooting.
    pub segments: usize,
    /// Share of epochs spent field-only at the start of a curriculum.
    pub curriculum_field_fraction: f64,
    /// Full-batch task/field gradient cosine once per epoch.
    pub log_conflict: bool,
    /// Evaluate every n epochs (0: only after the last epoch).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            epochs: 100,
            batch_size: 0,
            algorithm: Algorithm::Fullbptt,
            field_weight: 1.0,
            segments: 4,
            curriculum_field_fraction: 0.5,
            log_conflict: true,
            eval_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if !(self.field_weight.is_finite() && self.field_weight >= 0.0) {
            return Err(invalid("field_weight must be finite and >= 0"));
        }
        if self.segments == 0 {
            return Err(invalid("segments must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.curriculum_field_fraction) {
            return Err(invalid("curriculum_field_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    fn mode(&self) -> FieldMode {
        match self.algorithm {
            Algorithm::LocalFieldMatch => FieldMode::LocalMatch,
            Algorithm::SegmentShooting => FieldMode::Shooting {
                segments: self.segments,
            },
            _ => FieldMode::Full,
        }
    }

    /// `(task, field)` terms active in `epoch`.
    fn phase(&self, epoch: usize) -> (bool, bool) {
        let field = self.field_weight > 0.0;
        if !field {
            return (true, false);
        }
        match self.algorithm {
            Algorithm::Curriculum => {
                let field_epochs =
                    (self.curriculum_field_fraction * self.epochs as f64).round() as usize;
                if epoch < field_epochs {
                    (false, true)
                } else {
                    (true, false)
                }
            }
            Algorithm::Alternating => {
                if epoch % 2 == 0 {
                    (false, true)
                } else {
                    (true, false)
                }
            }
            _ => (true, field),
        }
    }
}

/// Per-epoch task/field gradient cosines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictLog {
    pub cosines: Vec<f64>,
}

impl ConflictLog {
    pub fn push(&mut self, c: f64) {
        self.cosines.push(c.clamp(-1.0, 1.0));
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.cosines.is_empty())
            .then(|| self.cosines.iter().sum::<f64>() / self.cosines.len() as f64)
    }

    /// Running mean after each epoch.
    pub fn running_mean(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.cosines
            .iter()
            .enumerate()
            .map(|(i, c)| {
                acc += c;
                acc / (i + 1) as f64
            })
            .collect()
    }

    pub fn min(&self) -> Option<f64> {
        self.cosines.iter().copied().reduce(f64::min)
    }

    /// Share of epochs with a strictly negative cosine.
    pub fn negative_fraction(&self) -> Option<f64> {
        (!self.cosines.is_empty()).then(|| {
            self.cosines.iter().filter(|c| **c < 0.0).count() as f64 / self.cosines.len() as f64
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: Option<f64>,
    pub field_loss: Option<f64>,
    pub metrics: Option<EpochMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub conflicts: ConflictLog,
    pub final_metrics: EpochMetrics,
    pub seconds: f64,
}

struct Step {
    task: Option<(f64, Vec<f64>)>,
    field: Option<(f64, Vec<f64>)>,
}

fn gradients<O: Objective>(
    params: &ParamSet,
    obj: &O,
    req: &LossRequest,
    field_weight: f64,
) -> Result<Step> {
    let tape = Tape::new();
    let p = params.bind(&tape)?;
    let vars = obj.losses(&tape, &p, req)?;
    let task = match vars.task.filter(|_| req.task) {
        Some(v) => Some((tape.scalar_value(v), tape.grad(v)?.into_data())),
        None => None,
    };
    let field = match vars.field.filter(|_| req.field) {
        Some(v) => {
            let g = tape.grad(v)?.into_data();
            Some((
                field_weight * tape.scalar_value(v),
                g.into_iter().map(|x| field_weight * x).collect(),
            ))
        }
        None => None,
    };
    Ok(Step { task, field })
}

fn diverged(epoch: usize, e: FieldError) -> FieldError {
    match e {
        FieldError::NonFinite { op } => FieldError::Diverged {
            epoch,
            detail: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

fn batches(n: usize, size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    if size == 0 || size >= n {
        return vec![(0..n).collect()];
    }
    let order = rng.permutation(n);
    order.chunks(size).map(|c| c.to_vec()).collect()
}

/// Trains `params` in place on `obj` following `cfg.algorithm`.
pub fn train<O: Objective>(
    params: &mut ParamSet,
    obj: &O,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = obj.num_samples();
    if n == 0 {
        return Err(invalid("objective has no samples"));
    }
    let start = Instant::now();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, params.len())?;
    let root = Rng::new(cfg.seed).stream("batches");
    let mode = cfg.mode();
    let all: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut conflicts = ConflictLog::default();
    let mut theta = params.theta().to_vec();
    for epoch in 0..cfg.epochs {
        if cfg.log_conflict && cfg.field_weight > 0.0 {
            let req = LossRequest {
                batch: &all,
                mode,
                task: true,
                field: true,
            };
            let s =
                gradients(params, obj, &req, cfg.field_weight).map_err(|e| diverged(epoch, e))?;
            if let (Some((_, gt)), Some((_, gf))) = (&s.task, &s.field) {
                conflicts.push(cosine(gt, gf));
            }
        }
        let (want_task, want_field) = cfg.phase(epoch);
        let mut rng = root.substream("epoch", epoch as u64);
        let mut task_sum = 0.0;
        let mut field_sum = 0.0;
        let mut seen_task = false;
        let mut seen_field = false;
        let parts = batches(n, cfg.batch_size, &mut rng);
        for batch in &parts {
            let req = LossRequest {
                batch,
                mode,
                task: want_task,
                field: want_field,
            };
            let s =
                gradients(params, obj, &req, cfg.field_weight).map_err(|e| diverged(epoch, e))?;
            let zeros = || vec![0.0; theta.len()];
            if let Some((v, _)) = &s.task {
                task_sum += v;
                seen_task = true;
            }
            if let Some((v, _)) = &s.field {
                field_sum += v;
                seen_field = true;
            }
            let gt = s.task.map(|(_, g)| g).unwrap_or_else(zeros);
            let gf = s.field.map(|(_, g)| g).unwrap_or_else(zeros);
            let dir = match cfg.algorithm {
                Algorithm::Pcgrad => pcgrad_combine(&gt, &gf),
                Algorithm::Mgda => mgda_combine(&gt, &gf),
                Algorithm::ProjectedTask => projected_task_step(&gt, &gf),
                _ => sum_combine(&gt, &gf),
            };
            opt.step(&mut theta, &dir)?;
            params.set_theta(&theta).map_err(|e| diverged(epoch, e))?;
        }
        let count = parts.len() as f64;
        let evaluate = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        let metrics = if evaluate {
            Some(obj.evaluate(params).map_err(|e| diverged(epoch, e))?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            task_loss: seen_task.then(|| task_sum / count),
            field_loss: seen_field.then(|| field_sum / count),
            metrics,
        });
        log::debug!(
            "epoch {epoch} {} task {:?} field {:?}",
            cfg.algorithm.name(),
            history[epoch].task_loss,
            history[epoch].field_loss
        );
    }
    let final_metrics = obj.evaluate(params).map_err(|e| diverged(cfg.epochs, e))?;
    Ok(TrainOutcome {
        history,
        conflicts,
        final_metrics,
        seconds: start.elapsed().as_secs_f64(),
    })
}
