//! Split-task continual learning: sequential training over disjoint class
//! pairs with replay, distillation, parameter and field-preservation
//! methods, plus forgetting and field-retention diagnostics.

mod buffer;
mod metrics;
mod phases;
mod run;

pub use buffer::{reservoir_indices, Buffer, Memory};
pub use metrics::{
    correlation_report, drift_diagnostics, hybrid_delta, metrics_aa_bwt_fwt, write_drift_csv,
    AccuracyMatrix, CorrelationReport, DriftRecord, HybridDelta, TransferMetrics,
};
pub use phases::{
    phase0, phase1, phase2, phase3, phase4, BudgetRow, HybridRow, Phase0Output, Phase2Row,
    PhaseOutputs, BUDGET_METHODS,
};
pub use run::{run_method, run_method_snapshots, MethodResult, TaskRecord};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gradcore::Rng;
use crate::manifoldgen::{Difficulty, LabeledSet, ManifoldGenerator, ManifoldSpec};
use crate::netzoo::{Family, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "finetune")]
    Finetune,
    #[serde(rename = "ewc")]
    Ewc,
    #[serde(rename = "lwf")]
    Lwf,
    #[serde(rename = "er")]
    Er,
    #[serde(rename = "derpp")]
    Derpp,
    #[serde(rename = "fpr_traj")]
    FprTraj,
    #[serde(rename = "fpr_jac")]
    FprJac,
    #[serde(rename = "fpr_full")]
    FprFull,
    #[serde(rename = "er+fpr_late")]
    ErFprLate,
    #[serde(rename = "derpp+fpr_full")]
    DerppFprFull,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Finetune,
        Method::Ewc,
        Method::Lwf,
        Method::Er,
        Method::Derpp,
        Method::FprTraj,
        Method::FprJac,
        Method::FprFull,
        Method::ErFprLate,
        Method::DerppFprFull,
    ];

    /// The eight standalone methods.
    pub const STANDALONE: [Method; 8] = [
        Method::Finetune,
        Method::Ewc,
        Method::Lwf,
        Method::Er,
        Method::Derpp,
        Method::FprTraj,
        Method::FprJac,
        Method::FprFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Ewc => "ewc",
            Method::Lwf => "lwf",
            Method::Er => "er",
            Method::Derpp => "derpp",
            Method::FprTraj => "fpr_traj",
            Method::FprJac => "fpr_jac",
            Method::FprFull => "fpr_full",
            Method::ErFprLate => "er+fpr_late",
            Method::DerppFprFull => "derpp+fpr_full",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method {s}")))
    }

    pub fn replays(self) -> bool {
        matches!(
            self,
            Method::Er | Method::Derpp | Method::ErFprLate | Method::DerppFprFull
        )
    }

    pub fn stores_logits(self) -> bool {
        matches!(self, Method::Derpp | Method::DerppFprFull)
    }

    /// Hidden-state and Jacobian preservation switches.
    pub fn fpr_terms(self) -> Option<(bool, bool)> {
        match self {
            Method::FprTraj => Some((true, false)),
            Method::FprJac => Some((false, true)),
            Method::FprFull | Method::DerppFprFull | Method::ErFprLate => Some((true, true)),
            _ => None,
        }
    }

    /// Base method of a hybrid.
    pub fn base(self) -> Option<Method> {
        match self {
            Method::ErFprLate => Some(Method::Er),
            Method::DerppFprFull => Some(Method::Derpp),
            _ => None,
        }
    }

    pub fn needs_memory(self) -> bool {
        self.replays() || self.fpr_terms().is_some()
    }
}

/// Protected layers for field preservation, by thirds of the depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerGroup {
    Early,
    Mid,
    Late,
    #[default]
    All,
}

impl LayerGroup {
    pub const ALL: [LayerGroup; 4] = [
        LayerGroup::Early,
        LayerGroup::Mid,
        LayerGroup::Late,
        LayerGroup::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerGroup::Early => "early",
            LayerGroup::Mid => "mid",
            LayerGroup::Late => "late",
            LayerGroup::All => "all",
        }
    }

    /// Layer indices of the group among `layers` layers.
    pub fn layers(self, layers: usize) -> Vec<usize> {
        let cut = |k: usize| (k * layers).div_ceil(3);
        let range = match self {
            LayerGroup::Early => 0..cut(1),
            LayerGroup::Mid => cut(1)..cut(2),
            LayerGroup::Late => cut(2)..layers,
            LayerGroup::All => 0..layers,
        };
        range.collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualConfig {
    pub tasks: usize,
    pub classes_per_task: usize,
    pub difficulty: Difficulty,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub hidden: usize,
    pub depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Replay / anchor samples kept per task.
    pub budget: usize,
    pub replay_batch: usize,
    pub lambda_ewc: f64,
    pub lwf_weight: f64,
    pub lwf_temperature: f64,
    pub derpp_alpha: f64,
    pub derpp_beta: f64,
    pub lambda_fpr: f64,
    pub lambda_h: f64,
    pub lambda_j: f64,
    pub fpr_probes: usize,
    pub anchor_batch: usize,
    pub fpr_layers: LayerGroup,
    /// Keeps the classifier head at its initial values.
    pub freeze_head: bool,
    /// Held-out samples per task used for retention metrics.
    pub metric_anchors: usize,
    pub jrs_probes: usize,
    pub seed: u64,
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig {
            tasks: 10,
            classes_per_task: 2,
            difficulty: Difficulty::Hard,
            ambient_dim: 32,
            intrinsic_dim: 4,
            train_per_class: 150,
            test_per_class: 50,
            hidden: 32,
            depth: 6,
            epochs: 10,
            batch_size: 32,
            lr: 3e-3,
            budget: 200,
            replay_batch: 32,
            lambda_ewc: 100.0,
            lwf_weight: 1.0,
            lwf_temperature: 2.0,
            derpp_alpha: 0.5,
            derpp_beta: 0.5,
            lambda_fpr: 0.05,
            lambda_h: 1.0,
            lambda_j: 1.0,
            fpr_probes: 1,
            anchor_batch: 32,
            fpr_layers: LayerGroup::All,
            freeze_head: false,
            metric_anchors: 50,
            jrs_probes: 2,
            seed: 0,
        }
    }
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks == 0 || self.classes_per_task == 0 {
            return Err(invalid("need at least one task and one class per task"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(invalid("need train and test samples per class"));
        }
        if self.epochs == 0
            || self.batch_size == 0
            || self.replay_batch == 0
            || self.anchor_batch == 0
        {
            return Err(invalid("epochs and batch sizes must be > 0"));
        }
        if !(self.lr > 0.0) || !(self.lwf_temperature > 0.0) {
            return Err(invalid("lr and temperature must be > 0"));
        }
        let weights = [
            self.lambda_ewc,
            self.lwf_weight,
            self.derpp_alpha,
            self.derpp_beta,
            self.lambda_fpr,
            self.lambda_h,
            self.lambda_j,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("continual loss weights must be finite and >= 0"));
        }
        if self.metric_anchors == 0
            || self.metric_anchors > self.test_per_class * self.classes_per_task
        {
            return Err(invalid(
                "metric_anchors must lie in 1..=test samples per task",
            ));
        }
        if self.fpr_probes == 0 || self.jrs_probes == 0 {
            return Err(invalid("probe counts must be > 0"));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.tasks * self.classes_per_task
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(
            Family::Residual,
            self.ambient_dim,
            self.hidden,
            self.depth,
            self.classes(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub classes: Vec<usize>,
    pub train: LabeledSet,
    pub test: LabeledSet,
}

/// Tasks with disjoint class sets, ordered by a seeded class permutation.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<Task>,
    pub classes: usize,
}

impl TaskSequence {
    pub fn build(cfg: &ContinualConfig, rng: &Rng) -> Result<Self> {
        cfg.validate()?;
        let classes = cfg.classes();
        let spec = ManifoldSpec::preset(
            cfg.difficulty,
            classes,
            cfg.ambient_dim,
            cfg.intrinsic_dim,
            cfg.train_per_class,
        );
        let generator = ManifoldGenerator::new(&spec, &rng.stream("manifold"))?;
        let train = generator.sample(cfg.train_per_class, &rng.stream("train"))?;
        let test = generator.sample(cfg.test_per_class, &rng.stream("test"))?;
        let order = rng.stream("task_order").permutation(classes);
        let tasks = order
            .chunks(cfg.classes_per_task)
            .map(|c| {
                let mut cls = c.to_vec();
                cls.sort_unstable();
                Ok(Task {
                    train: train.filter_classes(&cls)?,
                    test: test.filter_classes(&cls)?,
                    classes: cls,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TaskSequence { tasks, classes })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Sorted classes of tasks `0..=t`.
    pub fn seen_classes(&self, t: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.tasks[..=t]
            .iter()
            .flat_map(|k| k.classes.clone())
            .collect();
        c.sort_unstable();
        c
    }

    /// The first `tasks` tasks.
    pub fn truncated(&self, tasks: usize) -> Result<TaskSequence> {
        if tasks == 0 || tasks > self.len() {
            return Err(invalid(format!(
                "cannot keep {tasks} of {} tasks",
                self.len()
            )));
        }
        Ok(TaskSequence {
            tasks: self.tasks[..tasks].to_vec(),
            classes: self.classes,
        })
    }
}
