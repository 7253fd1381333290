//! Reveal-path training: a driven shared-field model reads one cumulative
//! reveal step per flow step, trained on some paths and audited on a held
//! out one.

use std::cell::RefCell;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::collapse::{collapse_check, CollapseFlags, CollapseThresholds};
use super::losses::{loss_jac_ops, loss_reveal, loss_reveal_ops, loss_task};
use crate::error::{invalid, Result};
use crate::fieldmetrics::{accuracy, path_sensitivity, Level};
use crate::gradcore::{Ops, Rng, Tape, Tensor, Var};
use crate::manifoldgen::{
    build_paths, reveal_schedule, Difficulty, LabeledSet, ManifoldGenerator, ManifoldSpec,
    PathKind, RevealPath,
};
use crate::netzoo::{Family, FieldModel, ModelConfig};
use crate::trainlab::{train, LossRequest, LossVars, Objective, TrainConfig};

/// Which field terms join the task loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevealVariant {
    Task,
    Reveal,
    Jac,
    Full,
}

impl RevealVariant {
    pub const ALL: [RevealVariant; 4] = [
        RevealVariant::Task,
        RevealVariant::Reveal,
        RevealVariant::Jac,
        RevealVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RevealVariant::Task => "task",
            RevealVariant::Reveal => "reveal",
            RevealVariant::Jac => "jac",
            RevealVariant::Full => "full",
        }
    }

    fn uses_reveal(self) -> bool {
        matches!(self, RevealVariant::Reveal | RevealVariant::Full)
    }

    fn uses_jac(self) -> bool {
        matches!(self, RevealVariant::Jac | RevealVariant::Full)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevealConfig {
    pub classes: usize,
    pub difficulty: Difficulty,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Reveal steps per path, one per flow step.
    pub steps: usize,
    /// Path kinds in order; the last one is held out from training.
    pub paths: Vec<PathKind>,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_r: f64,
    pub lambda_j: f64,
    /// Ordered training-path pairs sampled per batch for the reveal term.
    pub pairs_per_batch: usize,
    pub jac_probes: usize,
    pub seed: u64,
}

impl Default for RevealConfig {
    fn default() -> Self {
        RevealConfig {
            classes: 6,
            difficulty: Difficulty::Hard,
            ambient_dim: 16,
            intrinsic_dim: 3,
            train_per_class: 100,
            test_per_class: 50,
            steps: 4,
            paths: vec![
                PathKind::Sequential,
                PathKind::CenterOut,
                PathKind::Frequency,
                PathKind::Random,
                PathKind::Random,
            ],
            hidden: 32,
            epochs: 60,
            batch_size: 32,
            lr: 3e-3,
            lambda_r: 0.3,
            lambda_j: 0.1,
            pairs_per_batch: 2,
            jac_probes: 1,
            seed: 0,
        }
    }
}

impl RevealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths.len() < 3 {
            return Err(invalid(
                "need at least 2 training paths and 1 held-out path",
            ));
        }
        if self.classes < 2 || self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(invalid("need >= 2 classes and samples per class"));
        }
        if self.epochs == 0
            || self.batch_size == 0
            || self.pairs_per_batch == 0
            || self.jac_probes == 0
        {
            return Err(invalid(
                "epochs, batch size, pair and probe counts must be > 0",
            ));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("lr must be > 0"));
        }
        if [self.lambda_r, self.lambda_j]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(invalid("reveal weights must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let drive = 2 * self.ambient_dim;
        ModelConfig::new(
            Family::Sharedfield,
            drive * self.steps,
            self.hidden,
            self.steps,
            self.classes,
        )
        .with_drive(drive)
    }
}

/// Train/test data with one driven view per path.
#[derive(Clone, Debug)]
pub struct RevealData {
    pub paths: Vec<RevealPath>,
    pub train: LabeledSet,
    pub test: LabeledSet,
    /// Views of `train` through the training paths only.
    pub train_views: Vec<Tensor>,
    /// Views of `test` through every path; the last is the held-out path.
    pub test_views: Vec<Tensor>,
}

impl RevealData {
    pub fn build(cfg: &RevealConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = Rng::new(cfg.seed);
        let spec = ManifoldSpec::preset(
            cfg.difficulty,
            cfg.classes,
            cfg.ambient_dim,
            cfg.intrinsic_dim,
            cfg.train_per_class,
        );
        let g = ManifoldGenerator::new(&spec, &rng.stream("manifold"))?;
        let train = g.sample(cfg.train_per_class, &rng.stream("train"))?;
        let test = g.sample(cfg.test_per_class, &rng.stream("test"))?;
        let mean = train.x.sum_cols()?.scale(1.0 / train.len() as f64);
        let paths = build_paths(
            cfg.ambient_dim,
            &cfg.paths,
            cfg.steps,
            &rng.stream("paths"),
            Some(mean.data()),
        )?;
        let seen = paths.len() - 1;
        let train_views = paths[..seen]
            .iter()
            .map(|p| reveal_schedule(&train.x, p))
            .collect::<Result<_>>()?;
        let test_views = paths
            .iter()
            .map(|p| reveal_schedule(&test.x, p))
            .collect::<Result<_>>()?;
        Ok(RevealData {
            paths,
            train,
            test,
            train_views,
            test_views,
        })
    }

    pub fn unseen(&self) -> &RevealPath {
        self.paths.last().expect("validated")
    }
}

struct RevealObjective<'a> {
    cfg: &'a RevealConfig,
    variant: RevealVariant,
    model: &'a FieldModel,
    data: &'a RevealData,
    rng: RefCell<Rng>,
    /// Ids of every path that entered a training batch.
    touched: RefCell<BTreeSet<String>>,
}

impl Objective for RevealObjective<'_> {
    fn num_samples(&self) -> usize {
        self.data.train.len()
    }

    fn losses(&self, tape: &Tape, p: &[Var], req: &LossRequest) -> Result<LossVars> {
        let data = self.data;
        let labels: Vec<usize> = req.batch.iter().map(|&i| data.train.labels[i]).collect();
        let views = data
            .train_views
            .iter()
            .map(|v| tape.constant(v.select_rows(req.batch)?))
            .collect::<Result<Vec<_>>>()?;
        self.touched
            .borrow_mut()
            .extend(data.paths[..views.len()].iter().map(|p| p.id.clone()));

        let task = if req.task {
            let mut total: Option<Var> = None;
            for v in &views {
                let logits = self.model.forward_ops(tape, p, v)?.logits;
                let ce = loss_task(tape, &logits, &labels)?;
                total = Some(match total {
                    Some(t) => tape.add(&t, &ce)?,
                    None => ce,
                });
            }
            Some(tape.scale(&total.expect("paths"), 1.0 / views.len() as f64)?)
        } else {
            None
        };

        let mut field: Option<Var> = None;
        if req.field && self.variant.uses_reveal() && self.cfg.lambda_r > 0.0 {
            let pairs: Vec<(usize, usize)> = {
                let mut r = self.rng.borrow_mut();
                (0..self.cfg.pairs_per_batch)
                    .map(|_| {
                        let a = r.below(views.len());
                        let b = (a + 1 + r.below(views.len() - 1)) % views.len();
                        (a, b)
                    })
                    .collect()
            };
            let l = loss_reveal_ops(tape, self.model, p, &views, &pairs)?;
            field = Some(tape.scale(&l, self.cfg.lambda_r)?);
        }
        if req.field && self.variant.uses_jac() && self.cfg.lambda_j > 0.0 {
            let probes: Vec<Tensor> = {
                let mut r = self.rng.borrow_mut();
                (0..self.cfg.jac_probes)
                    .map(|_| r.rademacher_tensor(&[req.batch.len(), self.cfg.hidden]))
                    .collect()
            };
            let v = &views[self.rng.borrow_mut().below(views.len())];
            let l = tape.scale(
                &loss_jac_ops(tape, self.model, p, v, &probes)?,
                self.cfg.lambda_j,
            )?;
            field = Some(match field {
                Some(f) => tape.add(&f, &l)?,
                None => l,
            });
        }
        Ok(LossVars { task, field })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealMetrics {
    /// Mean accuracy over the training paths' test views.
    pub seen_acc: f64,
    pub unseen_acc: f64,
    pub path_sens_logit: f64,
    pub path_sens_hidden: f64,
    /// Reveal loss over all ordered pairs of test views.
    pub reveal_loss: f64,
    /// Collapse flags on the held-out path's test view.
    pub collapse: CollapseFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealOutcome {
    pub variant: RevealVariant,
    pub lambda_r: f64,
    pub lambda_j: f64,
    #[serde(flatten)]
    pub metrics: RevealMetrics,
    pub unseen_path: String,
    pub train_paths: Vec<String>,
}

/// Accuracy, path sensitivity, reveal loss and collapse of `m` on test data.
pub fn evaluate_reveal(
    m: &FieldModel,
    data: &RevealData,
    th: &CollapseThresholds,
) -> Result<RevealMetrics> {
    let labels = &data.test.labels;
    let seen = data.test_views.len() - 1;
    let mut seen_acc = 0.0;
    for v in &data.test_views[..seen] {
        seen_acc += accuracy(&m.logits(v)?, labels)? / seen as f64;
    }
    Ok(RevealMetrics {
        seen_acc,
        unseen_acc: accuracy(&m.logits(&data.test_views[seen])?, labels)?,
        path_sens_logit: path_sensitivity(m, &data.test_views, Level::Logit)?,
        path_sens_hidden: path_sensitivity(m, &data.test_views, Level::Hidden)?,
        reveal_loss: loss_reveal(m, &data.test_views)?,
        collapse: collapse_check(m, &data.test_views[seen], th)?,
    })
}

/// Trains one variant from the seed's initialization and evaluates it.
/// Fails if the held-out path ever entered a training batch.
pub fn run_reveal(
    cfg: &RevealConfig,
    data: &RevealData,
    variant: RevealVariant,
) -> Result<(FieldModel, RevealOutcome)> {
    cfg.validate()?;
    let rng = Rng::new(cfg.seed);
    let init = FieldModel::new(cfg.model_config(), &rng.stream("init"))?;
    let th = CollapseThresholds::from_init(&init, &data.test_views[data.test_views.len() - 1])?;
    let obj = RevealObjective {
        cfg,
        variant,
        model: &init,
        data,
        rng: RefCell::new(rng.stream("objective")),
        touched: RefCell::new(BTreeSet::new()),
    };
    let mut m = init.clone();
    let tc = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        field_weight: if variant == RevealVariant::Task {
            0.0
        } else {
            1.0
        },
        log_conflict: false,
        seed: cfg.seed,
        ..Default::default()
    };
    train(m.params_mut(), &obj, &tc)?;
    let touched = obj.touched.into_inner();
    let unseen = data.unseen().id.clone();
    if touched.contains(&unseen) {
        return Err(invalid(format!("held-out path {unseen} entered training")));
    }
    let metrics = evaluate_reveal(&m, data, &th)?;
    let outcome = RevealOutcome {
        variant,
        lambda_r: if variant.uses_reveal() {
            cfg.lambda_r
        } else {
            0.0
        },
        lambda_j: if variant.uses_jac() {
            cfg.lambda_j
        } else {
            0.0
        },
        metrics,
        unseen_path: unseen,
        train_paths: touched.into_iter().collect(),
    };
    Ok((m, outcome))
}
