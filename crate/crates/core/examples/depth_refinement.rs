//! Logit drift of a continuous classifier when integrated with 2× and 4×
//! its training step count, trained with and without solver consistency.
//!
//! cargo run --release --example depth_refinement -- [seed] [gamma]

use fieldlab::fieldlosses::LossWeights;
use fieldlab::fieldmetrics::{accuracy, refinement_gap};
use fieldlab::gradcore::Rng;
use fieldlab::netzoo::{Family, FieldModel, ModelConfig};
use fieldlab::odesolve::{Method, SolverSpec};
use fieldlab::teacherflow::{generate_dataset, Task, TeacherObjective, TeacherSpec};
use fieldlab::trainlab::{train, TrainConfig};

fn main() -> fieldlab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().map_or(0, |s| s.parse().expect("seed"));
    let gamma: f64 = args.get(1).map_or(1.0, |s| s.parse().expect("gamma"));
    let spec = TeacherSpec::default();
    let rng = Rng::new(seed);
    let train_set = generate_dataset(&spec, 400, Task::A, 0.0, &rng.stream("train"))?;
    let test_set = generate_dataset(&spec, 200, Task::A, 0.0, &rng.stream("test"))?;
    let solver = SolverSpec::new(Method::Euler, spec.intervals, 0.0, spec.horizon)?;
    let cfg = ModelConfig::new(
        Family::Continuous,
        spec.obs_dim,
        spec.latent_dim,
        spec.intervals,
        2,
    )
    .with_solver(solver)
    .with_field_width(32)
    .with_horizon(spec.horizon);
    let init = FieldModel::new(cfg, &rng.stream("model"))?;
    for (name, g) in [("task", 0.0), ("solver", gamma)] {
        let weights = LossWeights {
            gamma: g,
            ..Default::default()
        };
        let obj = TeacherObjective::new(&init, &train_set, &test_set, weights)?;
        let mut m = init.clone();
        let tc = TrainConfig {
            lr: 1e-2,
            epochs: 150,
            batch_size: 100,
            log_conflict: false,
            seed,
            ..Default::default()
        };
        let out = train(m.params_mut(), &obj, &tc)?;
        let acc = accuracy(&m.logits(&test_set.x)?, &test_set.labels)?;
        println!(
            "{name:>6}: acc {acc:.3}  gap 2x {:.3e}  gap 4x {:.3e}  ({:.1}s)",
            refinement_gap(&m, &test_set.x, 2)?,
            refinement_gap(&m, &test_set.x, 4)?,
            out.seconds
        );
    }
    Ok(())
}
