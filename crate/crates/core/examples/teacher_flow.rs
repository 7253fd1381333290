//! Endpoint-only vs field-supervised training on the latent teacher flow.
//!
//! cargo run --release --example teacher_flow -- [samples] [epochs] [seed]

use fieldlab::fieldlosses::LossWeights;
use fieldlab::gradcore::Rng;
use fieldlab::netzoo::{Family, FieldModel, ModelConfig};
use fieldlab::odesolve::{Method, SolverSpec};
use fieldlab::teacherflow::{
    evaluate_field_recovery, generate_dataset, Task, TeacherObjective, TeacherSpec,
};
use fieldlab::trainlab::{train, TrainConfig};

fn main() -> fieldlab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let samples: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let spec = TeacherSpec::default();
    let rng = Rng::new(seed);
    let train_set = generate_dataset(&spec, samples, Task::A, 0.0, &rng.stream("train"))?;
    let test_set = generate_dataset(&spec, samples / 4, Task::A, 0.0, &rng.stream("test"))?;
    println!("class balance {:.3}", train_set.class_balance());

    let solver = SolverSpec::new(Method::Rk4, spec.intervals, 0.0, spec.horizon)?;
    let cfg = ModelConfig::new(
        Family::Continuous,
        spec.obs_dim,
        spec.latent_dim,
        spec.intervals,
        2,
    )
    .with_solver(solver)
    .with_field_width(32);
    let init = FieldModel::new(cfg, &rng.stream("model"))?;

    for (name, weights) in [
        ("endpoint", LossWeights::default()),
        (
            "field",
            LossWeights {
                alpha: 1.0,
                beta: 1.0,
                ..Default::default()
            },
        ),
    ] {
        let obj = TeacherObjective::new(&init, &train_set, &test_set, weights)?;
        let mut model = init.clone();
        let tc = TrainConfig {
            lr: 1e-2,
            epochs,
            log_conflict: false,
            seed,
            ..Default::default()
        };
        let out = train(model.params_mut(), &obj, &tc)?;
        let r = evaluate_field_recovery(&model, &test_set)?;
        println!(
            "{name:>8}: acc {:.4} traj {:.4} deriv {:.4} reparam {:.2e} ({:.1}s)",
            r.accuracy, r.traj_rmse, r.deriv_rmse, r.reparam, out.seconds
        );
    }
    Ok(())
}
