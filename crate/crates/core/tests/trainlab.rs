use fieldlab::gradcore::{Ops, Rng, Tape, Tensor, Var};
use fieldlab::netzoo::ParamSet;
use fieldlab::trainlab::*;
use fieldlab::{FieldError, Result};
use proptest::prelude::*;

/// Task `Σ_i (w − a_i)²/n` and field `‖w − b‖²` over per-sample targets.
struct Quadratic {
    targets: Vec<Vec<f64>>,
    field_target: Vec<f64>,
    blow_up: bool,
}

impl Quadratic {
    fn new(targets: Vec<Vec<f64>>, field_target: Vec<f64>) -> Self {
        Quadratic {
            targets,
            field_target,
            blow_up: false,
        }
    }

    fn params(&self) -> ParamSet {
        ParamSet::from_tensors(vec![(
            "w".into(),
            Tensor::zeros(&[1, self.field_target.len()]),
        )])
    }
}

impl Objective for Quadratic {
    fn num_samples(&self) -> usize {
        self.targets.len()
    }

    fn losses(&self, tape: &Tape, p: &[Var], req: &LossRequest) -> Result<LossVars> {
        let mut task = None;
        for &i in req.batch {
            let t = tape.constant(Tensor::row(&self.targets[i]))?;
            let mut d = tape.sub(&p[0], &t)?;
            if self.blow_up {
                d = tape.scale(&d, 1e300)?;
            }
            let term = tape.sum(&tape.square(&d)?)?;
            task = Some(match task {
                Some(a) => tape.add(&a, &term)?,
                None => term,
            });
        }
        let task = tape.scale(&task.unwrap(), 1.0 / req.batch.len() as f64)?;
        let b = tape.constant(Tensor::row(&self.field_target))?;
        let field = tape.sum(&tape.square(&tape.sub(&p[0], &b)?)?)?;
        Ok(LossVars {
            task: Some(task),
            field: Some(field),
        })
    }
}

fn toy() -> Quadratic {
    Quadratic::new(
        vec![
            vec![1.0, -2.0, 0.5],
            vec![3.0, 0.0, 1.5],
            vec![2.0, 1.0, -1.0],
        ],
        vec![0.0, 1.0, 2.0],
    )
}

#[test]
fn sgd_reaches_closed_form_minimum() {
    let obj = toy();
    let mut p = obj.params();
    let cfg = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        lr: 0.1,
        epochs: 400,
        ..Default::default()
    };
    train(&mut p, &obj, &cfg).unwrap();
    // minimizer of mean_i ‖w − a_i‖² + ‖w − b‖² is (mean a + b) / 2
    let expect = [
        (2.0 + 0.0) / 2.0,
        (-1.0 / 3.0 + 1.0) / 2.0,
        (1.0 / 3.0 + 2.0) / 2.0,
    ];
    for (w, e) in p.theta().iter().zip(expect) {
        assert!((w - e).abs() < 1e-6, "{w} vs {e}");
    }
}

#[test]
fn adam_converges_on_toy() {
    let obj = toy();
    let mut p = obj.params();
    let cfg = TrainConfig {
        lr: 0.05,
        epochs: 2000,
        field_weight: 0.0,
        ..Default::default()
    };
    train(&mut p, &obj, &cfg).unwrap();
    let expect = [2.0, -1.0 / 3.0, 1.0 / 3.0];
    for (w, e) in p.theta().iter().zip(expect) {
        assert!((w - e).abs() < 1e-4, "{w} vs {e}");
    }
}

#[test]
fn zero_field_weight_reduces_combiners_to_task_descent() {
    let obj = toy();
    let base = TrainConfig {
        lr: 0.01,
        epochs: 30,
        batch_size: 2,
        field_weight: 0.0,
        seed: 5,
        ..Default::default()
    };
    let mut reference = obj.params();
    train(&mut reference, &obj, &base).unwrap();
    for alg in [
        Algorithm::Pcgrad,
        Algorithm::Mgda,
        Algorithm::ProjectedTask,
        Algorithm::Curriculum,
        Algorithm::Alternating,
    ] {
        let mut p = obj.params();
        let cfg = TrainConfig {
            algorithm: alg,
            ..base.clone()
        };
        train(&mut p, &obj, &cfg).unwrap();
        assert_eq!(p.theta(), reference.theta(), "{}", alg.name());
    }
}

#[test]
fn curriculum_without_field_epochs_is_task_only() {
    let obj = toy();
    let mut a = obj.params();
    let mut b = obj.params();
    let cur = TrainConfig {
        algorithm: Algorithm::Curriculum,
        curriculum_field_fraction: 0.0,
        epochs: 20,
        lr: 0.02,
        ..Default::default()
    };
    train(&mut a, &obj, &cur).unwrap();
    let plain = TrainConfig {
        field_weight: 0.0,
        ..cur.clone()
    };
    let plain = TrainConfig {
        algorithm: Algorithm::Fullbptt,
        ..plain
    };
    train(&mut b, &obj, &plain).unwrap();
    assert_eq!(a.theta(), b.theta());
}

#[test]
fn curriculum_phases_follow_the_split() {
    let obj = toy();
    let mut p = obj.params();
    let cfg = TrainConfig {
        algorithm: Algorithm::Curriculum,
        epochs: 10,
        ..Default::default()
    };
    let out = train(&mut p, &obj, &cfg).unwrap();
    for r in &out.history {
        assert_eq!(r.task_loss.is_some(), r.epoch >= 5);
        assert_eq!(r.field_loss.is_some(), r.epoch < 5);
    }
    let cfg = TrainConfig {
        algorithm: Algorithm::Alternating,
        ..cfg
    };
    let out = train(&mut obj.params(), &obj, &cfg).unwrap();
    for r in &out.history {
        assert_eq!(r.field_loss.is_some(), r.epoch % 2 == 0);
    }
}

#[test]
fn divergence_is_reported() {
    let mut obj = toy();
    obj.blow_up = true;
    let mut p = obj.params();
    p.set_theta(&[1e10, 0.0, 0.0]).unwrap();
    let err = train(&mut p, &obj, &TrainConfig::default()).unwrap_err();
    assert!(
        matches!(err, FieldError::Diverged { epoch: 0, .. }),
        "{err}"
    );
}

#[test]
fn conflict_log_statistics() {
    let log = ConflictLog {
        cosines: vec![0.5, -0.25, 1.0, -1.0],
    };
    assert_eq!(log.mean(), Some(0.0625));
    assert_eq!(log.min(), Some(-1.0));
    assert_eq!(log.negative_fraction(), Some(0.5));
    assert_eq!(log.running_mean(), vec![0.5, 0.125, 1.25 / 3.0, 0.0625]);
    assert_eq!(ConflictLog::default().negative_fraction(), None);
}

#[test]
fn conflict_is_logged_once_per_epoch() {
    let obj = toy();
    let out = train(
        &mut obj.params(),
        &obj,
        &TrainConfig {
            epochs: 7,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(out.conflicts.cosines.len(), 7);
    assert!(out
        .conflicts
        .cosines
        .iter()
        .all(|c| (-1.0..=1.0).contains(c)));
}

#[test]
fn pareto_csv_round_trips() {
    let obj = toy();
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<ParetoRow> = [Algorithm::Fullbptt, Algorithm::Pcgrad]
        .into_iter()
        .map(|alg| {
            let out = train(
                &mut obj.params(),
                &obj,
                &TrainConfig {
                    algorithm: alg,
                    epochs: 3,
                    ..Default::default()
                },
            )
            .unwrap();
            ParetoRow::from_outcome(alg, &out)
        })
        .collect();
    let path = dir.path().join("pareto.csv");
    write_pareto_csv(&path, &rows).unwrap();
    assert_eq!(read_pareto_csv(&path).unwrap(), rows);
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header
        .starts_with("algorithm,test_acc,traj_rmse,deriv_rmse,cos_mean,cos_min,neg_frac,seconds"));
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_pair(rng: &mut Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = (0..n).map(|_| rng.normal()).collect();
    let b = (0..n).map(|_| rng.normal()).collect();
    (a, b)
}

#[test]
fn projected_step_never_opposes_field_on_random_pairs() {
    let mut rng = Rng::new(11);
    for i in 0..1000 {
        let (gt, gf) = random_pair(&mut rng, 2 + i % 30);
        let p = projected_task_step(&gt, &gf);
        assert!(dot(&p, &gf) >= -1e-12, "pair {i}: {}", dot(&p, &gf));
    }
}

#[test]
fn mgda_matches_grid_search() {
    let mut rng = Rng::new(12);
    for _ in 0..50 {
        let (gt, gf) = random_pair(&mut rng, 6);
        let norm = |w: f64| -> f64 {
            gt.iter()
                .zip(&gf)
                .map(|(t, f)| (w * t + (1.0 - w) * f).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut best = (0.0, f64::INFINITY);
        let grid = 100_000;
        for k in 0..=grid {
            let w = k as f64 / grid as f64;
            let v = norm(w);
            if v < best.1 {
                best = (w, v);
            }
        }
        // ternary refinement around the best grid point
        let (mut lo, mut hi) = ((best.0 - 1e-5f64).max(0.0), (best.0 + 1e-5f64).min(1.0));
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if norm(m1) < norm(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let oracle = norm(0.5 * (lo + hi));
        let got = mgda_combine(&gt, &gf);
        let got_norm = dot(&got, &got).sqrt();
        assert!((got_norm - oracle).abs() < 1e-6, "{got_norm} vs {oracle}");
        assert!((mgda_weight(&gt, &gf) - 0.5 * (lo + hi)).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn pcgrad_components_do_not_conflict(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let (gt, gf) = random_pair(&mut rng, 5);
        let combined = pcgrad_combine(&gt, &gf);
        if dot(&gt, &gf) < 0.0 {
            let d = dot(&gt, &gf);
            let pt: Vec<f64> = gt.iter().zip(&gf).map(|(t, f)| t - d / dot(&gf, &gf) * f).collect();
            let pf: Vec<f64> = gf.iter().zip(&gt).map(|(f, t)| f - d / dot(&gt, &gt) * t).collect();
            prop_assert!(dot(&pt, &gf) >= -1e-12);
            prop_assert!(dot(&pf, &gt) >= -1e-12);
            for i in 0..5 {
                prop_assert!((combined[i] - pt[i] - pf[i]).abs() < 1e-12);
            }
        } else {
            for i in 0..5 {
                prop_assert_eq!(combined[i], gt[i] + gf[i]);
            }
        }
    }

    #[test]
    fn cosine_is_bounded(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let (a, b) = random_pair(&mut rng, 4);
        let c = cosine(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&c));
    }
}
