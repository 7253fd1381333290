use fieldlab::fieldlosses::*;
use fieldlab::fieldmetrics::{frs, EPS};
use fieldlab::gradcore::{Eval, Ops, Rng, Tensor};
use fieldlab::netzoo::{Activation, Family, FieldModel, ModelConfig};
use fieldlab::odesolve::{Method, SolverSpec};

fn set_linear(m: &mut FieldModel, prefix: &str, mat: &Tensor) {
    let d = mat.rows();
    m.params_mut()
        .set(&format!("{prefix}.w1"), &mat.transpose().unwrap())
        .unwrap();
    m.params_mut()
        .set(&format!("{prefix}.w2"), &Tensor::eye(d))
        .unwrap();
    m.params_mut()
        .set(&format!("{prefix}.b1"), &Tensor::zeros(&[1, d]))
        .unwrap();
    m.params_mut()
        .set(&format!("{prefix}.b2"), &Tensor::zeros(&[1, d]))
        .unwrap();
    if m.params().get(&format!("{prefix}.wt")).is_ok() {
        m.params_mut()
            .set(&format!("{prefix}.wt"), &Tensor::zeros(&[1, d]))
            .unwrap();
    }
}

/// Compares the tape gradient of a loss against central differences in θ.
macro_rules! check_grad {
    ($m:expr, |$ops:ident, $p:ident, $mm:ident| $body:expr) => {{
        let m: &FieldModel = $m;
        let (_, g) = value_and_grad_model(m, |$ops, $p| {
            let $mm = m;
            $body
        })
        .unwrap();
        let eval_at = |theta: &[f64]| {
            let mut c = m.clone();
            c.set_theta(theta).unwrap();
            let $ops = &Eval;
            let pv = c.params().bind($ops).unwrap();
            let $p = &pv[..];
            let $mm = &c;
            let run = || -> fieldlab::Result<Tensor> { $body };
            run().unwrap().item()
        };
        let theta = m.theta().to_vec();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] += h;
            let up = eval_at(&t);
            t[i] -= 2.0 * h;
            let dn = eval_at(&t);
            let fd = (up - dn) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-4);
            worst = worst.max((fd - g[i]).abs() / scale);
        }
        assert!(worst < 1e-3, "worst relative gradient error {worst}");
    }};
}

fn small(family: Family) -> FieldModel {
    let mut cfg = ModelConfig::new(family, 3, 4, 2, 3);
    if family == Family::Continuous {
        cfg = cfg.with_solver(SolverSpec::new(Method::Euler, 2, 0.0, 1.0).unwrap());
    }
    FieldModel::new(cfg, &Rng::new(17)).unwrap()
}

#[test]
fn task_loss_cases() {
    let big = Tensor::from_rows(&[vec![60.0, 0.0, 0.0], vec![0.0, 0.0, 60.0]]).unwrap();
    assert!(loss_task(&Eval, &big, &[0, 2]).unwrap().item() < 1e-20);
    let uniform = Tensor::zeros(&[5, 4]);
    assert!(
        (loss_task(&Eval, &uniform, &[0, 1, 2, 3, 0]).unwrap().item() - 4f64.ln()).abs() < 1e-12
    );
    let logits = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 3.0]]).unwrap();
    let labels = [1, 0, 1];
    let hand: f64 = (0..3)
        .map(|r| {
            let row = logits.row_slice(r);
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - row[labels[r]]
        })
        .sum::<f64>()
        / 3.0;
    assert!((loss_task(&Eval, &logits, &labels).unwrap().item() - hand).abs() < 1e-12);
    assert!(loss_task(&Eval, &logits, &[0, 5, 1]).is_err());
}

#[test]
fn masked_task_loss_uses_only_allowed_columns() {
    let logits = Tensor::from_rows(&[vec![9.0, 1.0, 2.0, 9.0]]).unwrap();
    let masked = loss_task_masked(&Eval, &logits, &[2], &[1, 2])
        .unwrap()
        .item();
    let hand = (1f64.exp() + 2f64.exp()).ln() - 2.0;
    assert!((masked - hand).abs() < 1e-12);
    assert!(loss_task_masked(&Eval, &logits, &[0], &[1, 2]).is_err());
}

#[test]
fn reveal_cases() {
    let m = small(Family::Sharedfield);
    let x = Rng::new(1).normal_tensor(&[4, 3], 1.0);
    assert_eq!(loss_reveal(&m, &[x.clone(), x.clone()]).unwrap(), 0.0);
    assert!(loss_reveal(&m, &[x]).is_err());

    let hp = Tensor::row(&[1.0, 2.0]);
    let hq = Tensor::row(&[0.0, 0.0]);
    let o = Tensor::row(&[0.3, -0.2]);
    let pure = reveal_pair(&Eval, &hp, &o, &hq, &o).unwrap().item();
    assert!((pure - 5.0).abs() < 1e-12);

    let (op, oq) = (Tensor::row(&[0.0, 1.0]), Tensor::row(&[1.0, 0.0]));
    let s = |a: f64, b: f64| (a.exp() / (a.exp() + b.exp()), b.exp() / (a.exp() + b.exp()));
    let (p0, p1) = s(0.0, 1.0);
    let (q0, q1) = s(1.0, 0.0);
    let kl = p0 * (p0 / q0).ln() + p1 * (p1 / q1).ln();
    let got = reveal_pair(&Eval, &hq, &op, &hq, &oq).unwrap().item();
    assert!((got - kl).abs() < 1e-12);
}

#[test]
fn reveal_hidden_term_symmetric_kl_not() {
    let mut rng = Rng::new(4);
    let (hp, hq) = (
        rng.normal_tensor(&[1, 3], 1.0),
        rng.normal_tensor(&[1, 3], 1.0),
    );
    let o = Tensor::row(&[0.1, 0.2, 0.3]);
    let a = reveal_pair(&Eval, &hp, &o, &hq, &o).unwrap().item();
    let b = reveal_pair(&Eval, &hq, &o, &hp, &o).unwrap().item();
    assert!((a - b).abs() < 1e-12);
    let (op, oq) = (
        Tensor::row(&[2.0, 0.0, -1.0]),
        Tensor::row(&[0.0, 0.5, 0.0]),
    );
    let kpq = kl_rows(&Eval, &op, &oq).unwrap().item();
    let kqp = kl_rows(&Eval, &oq, &op).unwrap().item();
    assert!((kpq - kqp).abs() > 1e-3);
}

#[test]
fn solver_loss_cases() {
    let spec = SolverSpec::new(Method::Euler, 4, 0.0, 1.0).unwrap();
    let cfg = ModelConfig::new(Family::Continuous, 2, 2, 4, 2)
        .with_solver(spec)
        .with_activation(Activation::Identity);
    let mut m = FieldModel::new(cfg, &Rng::new(0)).unwrap();
    let a = Tensor::from_rows(&[vec![-0.4, 1.0], vec![-1.0, 0.1]]).unwrap();
    set_linear(&mut m, "field", &a);
    let x = Tensor::row(&[0.7, -0.2]);
    assert_eq!(loss_solver(&m, &x, &spec, &spec).unwrap(), 0.0);

    // closed-form gap: h0 ((I + A/4)^4 − (I + A/8)^8)ᵀ
    let h0 = m.forward(&x).unwrap().hidden[0].clone();
    let power = |n: i32| {
        let step = Tensor::eye(2)
            .add(&a.scale(1.0 / n as f64))
            .unwrap()
            .transpose()
            .unwrap();
        let mut out = Tensor::eye(2);
        for _ in 0..n {
            out = out.matmul(&step).unwrap();
        }
        out
    };
    let dh = h0.matmul(&power(4).sub(&power(8)).unwrap()).unwrap();
    let dlog = dh.matmul(&m.params().get("head.w").unwrap()).unwrap();
    let oracle = dh.norm_sq() + dlog.norm_sq();
    let got = loss_solver(&m, &x, &spec, &spec.with_steps(8)).unwrap();
    assert!((got - oracle).abs() < 1e-12 * oracle.max(1.0));

    set_linear(&mut m, "field", &Tensor::zeros(&[2, 2]));
    let rk = spec.with_method(Method::Rk4);
    assert_eq!(loss_solver(&m, &x, &spec, &rk).unwrap(), 0.0);
}

#[test]
fn jacobian_smoothness_cases() {
    let cfg =
        ModelConfig::new(Family::Sharedfield, 3, 3, 4, 2).with_activation(Activation::Identity);
    let mut m = FieldModel::new(cfg, &Rng::new(0)).unwrap();
    set_linear(&mut m, "field", &Rng::new(1).normal_tensor(&[3, 3], 0.5));
    let x = Rng::new(2).normal_tensor(&[2, 3], 1.0);
    let probes = vec![Rng::new(3).rademacher_tensor(&[2, 3])];
    assert!(loss_jac(&m, &x, &probes).unwrap() < 1e-24);

    let cfg = ModelConfig::new(Family::Residual, 3, 3, 2, 2).with_activation(Activation::Identity);
    let mut r = FieldModel::new(cfg, &Rng::new(0)).unwrap();
    let a = Rng::new(5).normal_tensor(&[3, 3], 1.0);
    let b = Rng::new(6).normal_tensor(&[3, 3], 1.0);
    set_linear(&mut r, "layer0", &a);
    set_linear(&mut r, "layer1", &b);
    let basis: Vec<Tensor> = (0..3)
        .map(|i| {
            let mut e = Tensor::zeros(&[1, 3]);
            e.set(0, i, 1.0);
            e
        })
        .collect();
    let diff = b.sub(&a).unwrap();
    let oracle: f64 = (0..3)
        .map(|i| (0..3).map(|k| diff.get(k, i).powi(2)).sum::<f64>() / (1.0 + EPS))
        .sum::<f64>()
        / 3.0;
    let got = loss_jac(&r, &Tensor::row(&[0.1, 0.2, 0.3]), &basis).unwrap();
    assert!((got - oracle).abs() < 1e-12);

    let e = small(Family::Endpoint);
    assert!(loss_jac(&e, &Tensor::row(&[0.1, 0.2, 0.3]), &basis).is_err());
}

#[test]
fn trajectory_and_derivative_losses() {
    let mut rng = Rng::new(3);
    let teacher: Vec<Tensor> = (0..5).map(|_| rng.normal_tensor(&[1, 2], 1.0)).collect();
    assert_eq!(loss_traj(&teacher, &teacher).unwrap(), 0.0);
    let c = Tensor::row(&[0.5, -2.0]);
    let shifted: Vec<Tensor> = teacher.iter().map(|z| z.add(&c).unwrap()).collect();
    assert!((loss_traj(&shifted, &teacher).unwrap() - 5.0 * c.norm_sq()).abs() < 1e-12);
    let other: Vec<Tensor> = (0..5).map(|_| rng.normal_tensor(&[1, 2], 1.0)).collect();
    let direct: f64 = other
        .iter()
        .zip(&teacher)
        .map(|(a, b)| a.sub(b).unwrap().norm_sq())
        .sum();
    assert!((loss_traj(&other, &teacher).unwrap() - direct).abs() < 1e-12);

    let truth = |z: &Tensor, t: f64| z.scale(-0.5).add(&Tensor::full(z.shape(), t)).unwrap();
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let targets: Vec<Tensor> = teacher
        .iter()
        .zip(times)
        .map(|(z, t)| truth(z, t))
        .collect();
    let exact = loss_deriv_ops(
        &Eval,
        |z: &Tensor, t| Ok(truth(z, t)),
        &teacher,
        &times,
        &targets,
    )
    .unwrap();
    assert_eq!(exact.item(), 0.0);
    let off = loss_deriv_ops(
        &Eval,
        |z: &Tensor, t| truth(z, t).add(&c),
        &teacher,
        &times,
        &targets,
    )
    .unwrap();
    assert!((off.item() - 5.0 * c.norm_sq()).abs() < 1e-12);
    assert!(loss_traj(&teacher[..2], &teacher).is_err());
}

#[test]
fn field_preservation_cases() {
    let old = small(Family::Residual);
    let anchors = Rng::new(9).normal_tensor(&[5, 3], 1.0);
    let probes = vec![Rng::new(1).rademacher_tensor(&[5, 4]); 2];
    assert_eq!(
        loss_fpr(&old, &old, &anchors, &probes, 1.0, 1.0).unwrap(),
        0.0
    );
    let mut new = old.clone();
    let theta: Vec<f64> = old.theta().iter().map(|t| t * 1.1 + 0.01).collect();
    new.set_theta(&theta).unwrap();
    let lam = 0.7;
    let only_h = loss_fpr(&old, &new, &anchors, &probes, lam, 0.0).unwrap();
    assert!((only_h - lam * frs(&old, &new, &anchors).unwrap()).abs() < 1e-12);
    assert!(loss_fpr(&old, &new, &anchors, &probes, lam, 1.0).unwrap() > only_h);
    assert!(loss_fpr(&old, &new, &Tensor::zeros(&[0, 3]), &probes, 1.0, 0.0).is_err());
}

#[test]
fn collapse_fixture_counts() {
    let h = Tensor::from_rows(&[
        vec![0.0, 1.0],
        vec![2.0, 1.0],
        vec![4.0, 1.0],
        vec![6.0, 1.0],
    ])
    .unwrap();
    let logits = Tensor::from_rows(&[
        vec![2.0, 0.0],
        vec![3.0, 1.0],
        vec![0.0, 1.0],
        vec![5.0, 0.0],
    ])
    .unwrap();
    let th = CollapseThresholds {
        tau_v: 0.1,
        tau_c: 0.7,
    };
    let f = collapse_flags(&h, &logits, &th).unwrap();
    // variances: dim 0 = 5, dim 1 = 0 -> mean 2.5; class 0 predicted 3 of 4 times
    assert!((f.rep_variance - 2.5).abs() < 1e-12);
    assert!((f.class_balance - 0.75).abs() < 1e-12);
    assert!(f.collapsed);
    let relaxed = CollapseThresholds {
        tau_v: 0.1,
        tau_c: 0.8,
    };
    assert!(!collapse_flags(&h, &logits, &relaxed).unwrap().collapsed);
}

#[test]
fn gradients_match_finite_differences() {
    let x = Rng::new(5).normal_tensor(&[3, 3], 1.0);
    let x2 = Rng::new(6).normal_tensor(&[3, 3], 1.0);
    let labels = [0usize, 2, 1];
    let probes = vec![Rng::new(7).rademacher_tensor(&[3, 4])];

    let m = small(Family::Residual);
    check_grad!(&m, |ops, p, mm| {
        let xv = ops.constant(x.clone())?;
        loss_task(ops, &mm.forward_ops(ops, p, &xv)?.logits, &labels)
    });
    check_grad!(&m, |ops, p, mm| {
        let views = [ops.constant(x.clone())?, ops.constant(x2.clone())?];
        loss_reveal_ops(ops, mm, p, &views, &[(0, 1), (1, 0)])
    });
    check_grad!(&m, |ops, p, mm| {
        let xv = ops.constant(x.clone())?;
        loss_jac_ops(ops, mm, p, &xv, &probes)
    });
    let old = small(Family::Residual);
    let mut moved = old.clone();
    let theta: Vec<f64> = old.theta().iter().map(|t| t + 0.05).collect();
    moved.set_theta(&theta).unwrap();
    check_grad!(&moved, |ops, p, mm| loss_fpr_ops(
        ops, &old, mm, p, &x, &probes, 1.0, 0.5
    ));

    let c = small(Family::Continuous);
    let s1 = SolverSpec::new(Method::Euler, 2, 0.0, 1.0).unwrap();
    let s2 = SolverSpec::new(Method::Rk4, 2, 0.0, 1.0).unwrap();
    check_grad!(&c, |ops, p, mm| {
        let xv = ops.constant(x.clone())?;
        loss_solver_ops(ops, mm, p, &xv, &s1, &s2)
    });
    let teacher: Vec<Tensor> = (0..3)
        .map(|k| Tensor::full(&[3, 4], 0.1 * k as f64))
        .collect();
    check_grad!(&c, |ops, p, mm| {
        let xv = ops.constant(x.clone())?;
        let pass = mm.forward_ops(ops, p, &xv)?;
        loss_traj_ops(ops, &pass.hidden, &teacher)
    });
    check_grad!(&c, |ops, p, mm| {
        let xv = ops.constant(x.clone())?;
        let pass = mm.forward_ops(ops, p, &xv)?;
        let field = |z: &_, t| mm.vector_field_ops(ops, p, z, t);
        loss_deriv_ops(ops, field, &pass.hidden, &[0.0, 0.5, 1.0], &teacher)
    });
}
