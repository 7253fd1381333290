//! Optimizers, two-objective gradient combiners and the training loop.
//!
//! Training runs over a flat [`ParamSet`](crate::netzoo::ParamSet) and an
//! [`Objective`] that records a task term and a field term on a tape.
//! Algorithms differ only in which terms are active per epoch and how the
//! two gradients are combined.

mod combine;
mod optim;
mod pareto;
mod train;

pub use combine::{
    cosine, mgda_combine, mgda_weight, pcgrad_combine, projected_task_step, sum_combine,
};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use pareto::{read_pareto_csv, write_pareto_csv, ParetoRow};
pub use train::{
    train, Algorithm, ConflictLog, EpochMetrics, EpochRecord, FieldMode, LossRequest, LossVars,
    Objective, TrainConfig, TrainOutcome,
};
