use fieldlab::fieldmetrics::*;
use fieldlab::gradcore::{Rng, Tensor};
use fieldlab::netzoo::{orthonormal, Activation, Family, FieldModel, ModelConfig};
use fieldlab::odesolve::{Method, SolverSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn points(rng: &mut Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.normal()).collect())
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn make_linear(m: &mut FieldModel, prefix: &str, mat: &Tensor) {
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

#[test]
fn geometry_matches_direct_recompute() {
    let mut rng = Rng::new(3);
    let pts = points(&mut rng, 10, 4);
    let t = Trajectory::from_points(&pts).unwrap();
    let len: f64 = pts.windows(2).map(|w| dist(&w[1], &w[0])).sum();
    assert!((path_length(&t) - len).abs() < 1e-12);

    let mut kappa = 0.0;
    let mut align = 0.0;
    for l in 1..9 {
        let second: Vec<f64> = (0..4)
            .map(|i| pts[l + 1][i] - 2.0 * pts[l][i] + pts[l - 1][i])
            .collect();
        let step = dist(&pts[l + 1], &pts[l]);
        kappa += second.iter().map(|v| v * v).sum::<f64>().sqrt() / (step * step + EPS);
    }
    for l in 0..8 {
        let a: Vec<f64> = (0..4).map(|i| pts[l + 1][i] - pts[l][i]).collect();
        let b: Vec<f64> = (0..4).map(|i| pts[l + 2][i] - pts[l + 1][i]).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        align += dot / (dist(&pts[l + 1], &pts[l]) * dist(&pts[l + 2], &pts[l + 1]) + EPS);
    }
    assert!((curvature(&t, EPS).unwrap() - kappa / 8.0).abs() < 1e-12);
    assert!((velocity_alignment(&t, EPS).unwrap() - align / 8.0).abs() < 1e-12);
    let np = len / dist(&pts[9], &pts[0]);
    assert!((norm_path(&t, EPS) - np).abs() < 1e-12);
}

#[test]
fn batched_trajectory_averages_rows() {
    let mut rng = Rng::new(5);
    let a = points(&mut rng, 4, 3);
    let b = points(&mut rng, 4, 3);
    let states: Vec<Tensor> = (0..4)
        .map(|k| Tensor::from_rows(&[a[k].clone(), b[k].clone()]).unwrap())
        .collect();
    let joint = Trajectory::new(states).unwrap();
    let ta = Trajectory::from_points(&a).unwrap();
    let tb = Trajectory::from_points(&b).unwrap();
    assert!((path_length(&joint) - 0.5 * (path_length(&ta) + path_length(&tb))).abs() < 1e-12);
}

#[test]
fn path_sensitivity_brute_force() {
    let mut rng = Rng::new(1);
    let outs: Vec<Tensor> = (0..3).map(|_| rng.normal_tensor(&[2, 5], 1.0)).collect();
    let mut total = 0.0;
    for (p, q) in [(0, 1), (0, 2), (1, 2)] {
        for r in 0..2 {
            total += dist(outs[p].row_slice(r), outs[q].row_slice(r));
        }
    }
    assert!((pairwise_path_distance(&outs).unwrap() - total / 6.0).abs() < 1e-12);
    assert!(pairwise_path_distance(&outs[..1]).is_err());

    let m = FieldModel::new(ModelConfig::new(Family::Residual, 5, 4, 2, 3), &Rng::new(0)).unwrap();
    let x = rng.normal_tensor(&[4, 5], 1.0);
    let same = vec![x.clone(), x.clone(), x.clone()];
    assert_eq!(path_sensitivity(&m, &same, Level::Hidden).unwrap(), 0.0);
    assert_eq!(path_sensitivity(&m, &same, Level::Logit).unwrap(), 0.0);
}

fn linear_continuous(steps: usize) -> FieldModel {
    let spec = SolverSpec::new(Method::Euler, steps, 0.0, 1.0).unwrap();
    let cfg = ModelConfig::new(Family::Continuous, 2, 2, steps, 2)
        .with_solver(spec)
        .with_activation(Activation::Identity);
    let mut m = FieldModel::new(cfg, &Rng::new(3)).unwrap();
    let a = Tensor::from_rows(&[vec![-0.5, 1.0], vec![-1.0, -0.2]]).unwrap();
    make_linear(&mut m, "field", &a);
    m
}

#[test]
fn solver_consistency_cases() {
    let m = linear_continuous(8);
    let x = Tensor::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0]]).unwrap();
    let e8 = SolverSpec::new(Method::Euler, 8, 0.0, 1.0).unwrap();
    let e16 = e8.with_steps(16);
    assert_eq!(solver_consistency(&m, &x, &[e8, e8]).unwrap(), 0.0);

    // dense oracle: h_T = h_0 ((I + A dt)ᵀ)^N, logits = h_T W + b
    let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]);
    let h0 = m.forward(&x).unwrap().hidden[0].clone();
    let w = m.params().get("head.w").unwrap();
    let w = DMatrix::from_row_slice(2, 2, w.data());
    let end = |n: usize| {
        let step = DMatrix::identity(2, 2) + &a * (1.0 / n as f64);
        let mut p = DMatrix::identity(2, 2);
        for _ in 0..n {
            p = &step * p;
        }
        p
    };
    let (p8, p16) = (end(8), end(16));
    let mut oracle = 0.0;
    for r in 0..2 {
        let h = nalgebra::DVector::from_row_slice(h0.row_slice(r));
        let dh = (&p8 - &p16) * h;
        let dlog = w.transpose() * &dh;
        oracle += dh.norm() + dlog.norm();
    }
    oracle /= 2.0;
    let got = solver_consistency(&m, &x, &[e8, e16]).unwrap();
    assert!((got / oracle - 1.0).abs() < 0.1, "{got} vs {oracle}");

    let mut zero = m.clone();
    make_linear(&mut zero, "field", &Tensor::zeros(&[2, 2]));
    let rk = SolverSpec::new(Method::Rk4, 3, 0.0, 1.0).unwrap();
    assert_eq!(solver_consistency(&zero, &x, &[e8, e16, rk]).unwrap(), 0.0);
}

#[test]
fn refinement_gap_cases() {
    let m = linear_continuous(8);
    let x = Tensor::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.2, -0.7]]).unwrap();
    assert_eq!(refinement_gap(&m, &x, 1).unwrap(), 0.0);
    assert!(refinement_gap(&m, &x, 0).is_err());

    // dense oracle: logit change of h_0 ((I + A dt)ᵀ)^N between N = 8 and 32
    let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]);
    let h0 = m.forward(&x).unwrap().hidden[0].clone();
    let w = m.params().get("head.w").unwrap();
    let w = DMatrix::from_row_slice(2, 2, w.data());
    let end = |n: usize| {
        let step = DMatrix::identity(2, 2) + &a * (1.0 / n as f64);
        (0..n).fold(DMatrix::identity(2, 2), |p, _| &step * p)
    };
    let diff = end(8) - end(32);
    let oracle = (0..3)
        .map(|r| {
            (w.transpose() * (&diff * nalgebra::DVector::from_row_slice(h0.row_slice(r)))).norm()
        })
        .sum::<f64>()
        / 3.0;
    let got = refinement_gap(&m, &x, 4).unwrap();
    assert!(
        (got - oracle).abs() < 1e-10 * oracle.max(1.0),
        "{got} vs {oracle}"
    );
    assert!(refinement_gap(&m, &x, 2).unwrap() < got);

    let mut zero = m.clone();
    make_linear(&mut zero, "field", &Tensor::zeros(&[2, 2]));
    assert_eq!(refinement_gap(&zero, &x, 4).unwrap(), 0.0);
    let discrete = FieldModel::new(
        ModelConfig::new(Family::Sharedfield, 2, 2, 4, 2),
        &Rng::new(0),
    )
    .unwrap();
    assert!(refinement_gap(&discrete, &x, 2).is_err());
}

#[test]
fn retention_scores() {
    let cfg = ModelConfig::new(Family::Endpoint, 3, 3, 1, 2).with_activation(Activation::Identity);
    let m = FieldModel::new(cfg, &Rng::new(0)).unwrap();
    let anchors = Rng::new(1).normal_tensor(&[5, 3], 1.0);
    assert_eq!(frs(&m, &m, &anchors).unwrap(), 0.0);
    assert_eq!(jrs(&m, &m, &anchors, 4, &mut Rng::new(2)).unwrap(), 0.0);

    // shifting the encoder bias by Δ moves h_0 by Δ and h_1 by Δ W
    let delta = Tensor::row(&[0.3, -0.1, 0.2]);
    let mut shifted = m.clone();
    let b = m.params().get("enc.b").unwrap().add(&delta).unwrap();
    shifted.params_mut().set("enc.b", &b).unwrap();
    let w = m.params().get("body.w").unwrap();
    let oracle = (delta.norm_sq() + delta.matmul(&w).unwrap().norm_sq()) / 2.0;
    assert!((frs(&m, &shifted, &anchors).unwrap() - oracle).abs() < 1e-12);
    assert!(frs(&m, &shifted, &Tensor::zeros(&[0, 3])).is_err());
    assert!(jrs(&m, &m, &anchors, 0, &mut Rng::new(0)).is_err());
}

#[test]
fn jrs_matches_dense_column_oracle() {
    let cfg = ModelConfig::new(Family::Residual, 3, 3, 1, 2).with_activation(Activation::Identity);
    let mut ma = FieldModel::new(cfg.clone(), &Rng::new(0)).unwrap();
    let mut mb = FieldModel::new(cfg, &Rng::new(1)).unwrap();
    let a = Rng::new(5).normal_tensor(&[3, 3], 1.0);
    let b = Rng::new(6).normal_tensor(&[3, 3], 1.0);
    make_linear(&mut ma, "layer0", &a);
    make_linear(&mut mb, "layer0", &b);
    let anchors = Rng::new(7).normal_tensor(&[2, 3], 1.0);
    let basis: Vec<Tensor> = (0..3)
        .map(|i| {
            let mut e = Tensor::zeros(&[2, 3]);
            e.set(0, i, 1.0);
            e.set(1, i, 1.0);
            e
        })
        .collect();
    let got = jrs_with_probes(&ma, &mb, &anchors, &[basis]).unwrap();
    let diff = a.sub(&b).unwrap();
    let oracle: f64 = (0..3)
        .map(|i| (0..3).map(|r| diff.get(r, i).powi(2)).sum::<f64>() / (1.0 + EPS))
        .sum::<f64>()
        / 3.0;
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

#[test]
fn spectra_of_known_layers() {
    let cfg = ModelConfig::new(Family::Sharedfield, 3, 3, 2, 2);
    let mut m = FieldModel::new(cfg, &Rng::new(0)).unwrap();
    for n in ["field.w2", "field.b2"] {
        let t = m.params().get(n).unwrap();
        m.params_mut().set(n, &Tensor::zeros(t.shape())).unwrap();
    }
    let x = Tensor::row(&[0.1, 0.2, 0.3]);
    let s = jacobian_spectrum(&m, &x, 0, 3, &mut Rng::new(1)).unwrap();
    assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!(jacobian_spectrum(&m, &x, 0, 4, &mut Rng::new(1)).is_err());

    let cfg = ModelConfig::new(Family::Residual, 3, 3, 1, 2).with_activation(Activation::Identity);
    let mut r = FieldModel::new(cfg, &Rng::new(0)).unwrap();
    let diag = Tensor::from_rows(&[
        vec![2.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0],
    ])
    .unwrap();
    make_linear(&mut r, "layer0", &diag);
    let s = jacobian_spectrum(&r, &x, 0, 2, &mut Rng::new(3)).unwrap();
    assert!(
        (s[0] - 3.0).abs() < 1e-6 && (s[1] - 2.0).abs() < 1e-6,
        "{s:?}"
    );
}

#[test]
fn spectrum_of_tanh_layer_matches_dense_svd() {
    let m = FieldModel::new(ModelConfig::new(Family::Timecond, 4, 5, 3, 2), &Rng::new(9)).unwrap();
    let x = Tensor::row(&[0.3, -0.7, 1.1, 0.2]);
    let h = m.forward(&x).unwrap().hidden[1].clone();
    let mut dense = DMatrix::zeros(5, 5);
    for i in 0..5 {
        let mut e = Tensor::zeros(&[1, 5]);
        e.set(0, i, 1.0);
        let col = m.layer_jvp_at(&x, &h, 1, &e).unwrap();
        for r in 0..5 {
            dense[(r, i)] = col.get(0, r);
        }
    }
    let mut oracle: Vec<f64> = dense.singular_values().iter().copied().collect();
    oracle.sort_by(|a, b| b.total_cmp(a));
    // k = 3 oversamples to the full 5-dim space, so the estimate is exact
    let got = jacobian_spectrum(&m, &x, 1, 3, &mut Rng::new(4)).unwrap();
    for k in 0..3 {
        assert!((got[k] - oracle[k]).abs() < 1e-10, "{got:?} vs {oracle:?}");
    }
}

fn cdf_w1(a: &[f64], b: &[f64]) -> f64 {
    let mut grid: Vec<f64> = a.iter().chain(b).copied().collect();
    grid.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.iter().filter(|v| **v <= x).count() as f64 / s.len() as f64;
    grid.windows(2)
        .map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0]))
        .sum()
}

#[test]
fn wasserstein_matches_cdf_integral() {
    let mut rng = Rng::new(4);
    for _ in 0..10 {
        let a: Vec<f64> = (0..7).map(|_| rng.normal().abs()).collect();
        let b: Vec<f64> = (0..7).map(|_| rng.normal().abs() * 2.0).collect();
        assert!((jac_wasserstein(&a, &b).unwrap() - cdf_w1(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn procrustes_matches_grid_search_in_2d() {
    let mut rng = Rng::new(8);
    let a = Trajectory::from_points(&points(&mut rng, 5, 2)).unwrap();
    let b = Trajectory::from_points(&points(&mut rng, 5, 2)).unwrap();
    let (ma, mb) = (resample(&a, 5).unwrap(), resample(&b, 5).unwrap());
    let mut best = f64::MAX;
    let steps = 20000;
    for k in 0..steps {
        let th = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
        let (c, s) = (th.cos(), th.sin());
        for refl in [1.0, -1.0] {
            let q = DMatrix::from_row_slice(2, 2, &[c, -s * refl, s, c * refl]);
            let aq = &ma * q;
            let scale = aq.dot(&mb) / aq.norm_squared();
            best = best.min((aq * scale - &mb).norm() / mb.norm());
        }
    }
    let got = procrustes_error(&a, &b).unwrap();
    assert!(
        got <= best + 1e-12 && best - got < 1e-4,
        "{got} vs grid {best}"
    );
}

#[test]
fn procrustes_resamples_unequal_lengths() {
    let a = Trajectory::from_points(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
    let b = Trajectory::from_points(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 2.0]]).unwrap();
    assert!(procrustes_error(&a, &b).unwrap() < 1e-10);
}

#[test]
fn ece_balanced_binary_uniform() {
    let logits = Tensor::zeros(&[6, 2]);
    // all predictions are class 0 with confidence 0.5; half the labels are 0
    let ece = calibration_ece(&logits, &[0, 1, 0, 1, 0, 1], ECE_BINS).unwrap();
    assert!((ece - 0.0).abs() < 1e-12);
    let ece = calibration_ece(&logits, &[1, 1, 1, 1, 0, 1], ECE_BINS).unwrap();
    assert!((ece - (0.5 - 1.0 / 6.0)).abs() < 1e-12);
}

fn brute_spearman_p(xs: &[f64], ys: &[f64]) -> f64 {
    fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut p in perms(rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }
    let rho = spearman(xs, ys).unwrap();
    let all = perms((0..ys.len()).collect());
    let hits = all
        .iter()
        .filter(|p| {
            let permuted: Vec<f64> = p.iter().map(|&i| ys[i]).collect();
            spearman(xs, &permuted).unwrap().abs() >= rho.abs() - 1e-12
        })
        .count();
    hits as f64 / all.len() as f64
}

#[test]
fn correlation_fixtures() {
    let xs = [1.0, 2.5, 3.0, 4.2, 5.0];
    let ys = [2.0, 1.0, 4.0, 3.5, 6.0];
    let c = correlations(&xs, &ys).unwrap();
    assert!((c.spearman_rho - 0.8).abs() < 1e-12);
    assert!((c.spearman_p - brute_spearman_p(&xs, &ys)).abs() < 1e-12);

    // r = 0.5 with n = 12 gives t = 1.8257 on 10 dof, two-sided p ≈ 0.0979
    assert!((t_test_p(0.5, 12) - 0.0979).abs() < 1e-3);
    let long: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let c = correlations(&long, &long.iter().map(|v| v * v).collect::<Vec<_>>()).unwrap();
    assert!(c.spearman_rho > 0.999 && c.spearman_p < 1e-10);
    assert!(correlations(&[1.0, 2.0], &[1.0, 2.0]).is_err());
}

#[test]
fn field_report_serializes_flat_snake_case() {
    let t = Trajectory::from_points(&[vec![0.0], vec![1.0]]).unwrap();
    let r = FieldReport::from_trajectory(&t);
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(v["len"], 1.0);
    assert!(v["curvature"].is_null());
    for key in [
        "norm_path",
        "vel_align",
        "path_sens_hidden",
        "path_sens_logit",
        "solver_err",
        "jac_wdist",
        "frs",
        "jrs",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn path_length_is_rotation_invariant(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let pts = points(&mut rng, 6, 4);
        let q = orthonormal(4, 4, &mut rng);
        let t = Trajectory::from_points(&pts).unwrap();
        let rotated: Vec<Tensor> = t.states().iter().map(|s| s.matmul(&q).unwrap()).collect();
        let tr = Trajectory::new(rotated).unwrap();
        prop_assert!((path_length(&t) - path_length(&tr)).abs() < 1e-10);
    }

    #[test]
    fn straight_affine_segment_has_zero_curvature(
        origin in proptest::collection::vec(-3.0f64..3.0, 3),
        dir in proptest::collection::vec(-3.0f64..3.0, 3),
        n in 3usize..10,
    ) {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|k| origin.iter().zip(&dir).map(|(o, d)| o + k as f64 * d).collect())
            .collect();
        let k = curvature(&Trajectory::from_points(&pts).unwrap(), EPS).unwrap();
        prop_assert!(k < 1e-6);
    }

    #[test]
    fn path_sensitivity_symmetric_nonnegative(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let outs: Vec<Tensor> = (0..3).map(|_| rng.normal_tensor(&[2, 3], 1.0)).collect();
        let rev: Vec<Tensor> = outs.iter().rev().cloned().collect();
        let a = pairwise_path_distance(&outs).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - pairwise_path_distance(&rev).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_triangle_inequality(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let mut draw = || (0..5).map(|_| rng.normal()).collect::<Vec<f64>>();
        let (a, b, c) = (draw(), draw(), draw());
        let ab = jac_wasserstein(&a, &b).unwrap();
        let bc = jac_wasserstein(&b, &c).unwrap();
        let ac = jac_wasserstein(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn retention_of_model_with_itself_is_zero(seed in 0u64..1000) {
        let m = FieldModel::new(ModelConfig::new(Family::Hybrid, 3, 4, 3, 2), &Rng::new(seed)).unwrap();
        let x = Rng::new(seed + 1).normal_tensor(&[3, 3], 1.0);
        prop_assert_eq!(frs(&m, &m, &x).unwrap(), 0.0);
        prop_assert_eq!(jrs(&m, &m, &x, 2, &mut Rng::new(seed)).unwrap(), 0.0);
    }
}
