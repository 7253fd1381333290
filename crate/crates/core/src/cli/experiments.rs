use serde::{Deserialize, Serialize};

use crate::continual::{ContinualConfig, PhaseOutputs};
use crate::error::{invalid, Result};
use crate::fieldlosses::{
    loss_task, run_reveal, LossWeights, RevealConfig, RevealData, RevealOutcome, RevealVariant,
};
use crate::fieldmetrics::{
    accuracy, calibration_ece, refinement_gap, solver_consistency, spectral_profile, FieldReport,
    Trajectory, ECE_BINS,
};
use crate::gradcore::{Ops, Rng, Tape, Var};
use crate::manifoldgen::{Difficulty, LabeledSet, ManifoldGenerator, ManifoldSpec};
use crate::netzoo::{Family, FieldModel, ModelConfig, ParamSet};
use crate::odesolve::{Method, SolverSpec};
use crate::pdebench::{
    evaluate_pde, generate_pde_dataset, negative_control, train_pde_model, Control, ModelClass,
    PdeFamily, PdeModelConfig, PdeRow, PdeSpec, ReferenceModel,
};
use crate::teacherflow::{
    evaluate_field_recovery, generate_dataset, FieldRecovery, Task, TeacherObjective, TeacherSpec,
};
use crate::trainlab::{
    train, Algorithm, EpochMetrics, LossRequest, LossVars, Objective, ParetoRow, TrainConfig,
};

// ---------------------------------------------------------------- teacherflow

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementExp {
    pub enabled: bool,
    pub samples: usize,
    pub test_samples: usize,
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Solver-consistency weight of the regularized run.
    pub gamma: f64,
}

impl Default for RefinementExp {
    fn default() -> Self {
        RefinementExp {
            enabled: true,
            samples: 400,
            test_samples: 200,
            method: Method::Euler,
            epochs: 150,
            batch_size: 100,
            lr: 1e-2,
            gamma: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherflowExp {
    pub spec: TeacherSpec,
    pub samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub field_width: usize,
    /// Field terms of the supervised run (the endpoint run uses none).
    pub field: LossWeights,
    pub refinement: RefinementExp,
    /// Also write the generated datasets as JSON lines.
    pub export_data: bool,
}

impl Default for TeacherflowExp {
    fn default() -> Self {
        TeacherflowExp {
            spec: TeacherSpec::default(),
            samples: 1000,
            test_samples: 250,
            epochs: 300,
            batch_size: 0,
            lr: 1e-2,
            field_width: 32,
            field: LossWeights {
                alpha: 1.0,
                beta: 1.0,
                ..Default::default()
            },
            refinement: RefinementExp::default(),
            export_data: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherRow {
    pub acc: f64,
    pub traj_rmse: f64,
    pub deriv_rmse: f64,
    pub reparam: f64,
}

impl From<FieldRecovery> for TeacherRow {
    fn from(r: FieldRecovery) -> Self {
        TeacherRow {
            acc: r.accuracy,
            traj_rmse: r.traj_rmse,
            deriv_rmse: r.deriv_rmse,
            reparam: r.reparam,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    pub task_acc: f64,
    pub solver_acc: f64,
    pub task_gap_2x: f64,
    pub task_gap_4x: f64,
    pub solver_gap_2x: f64,
    pub solver_gap_4x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherflowResult {
    pub endpoint: TeacherRow,
    pub field: TeacherRow,
    /// `|acc(field) − acc(endpoint)|`.
    pub acc_gap: f64,
    /// Endpoint over field-supervised error.
    pub traj_ratio: f64,
    pub deriv_ratio: f64,
    pub refinement: Option<RefinementResult>,
}

fn teacher_model(
    spec: &TeacherSpec,
    method: Method,
    width: usize,
    rng: &Rng,
) -> Result<FieldModel> {
    let solver = SolverSpec::new(method, spec.intervals, 0.0, spec.horizon)?;
    let cfg = ModelConfig::new(
        Family::Continuous,
        spec.obs_dim,
        spec.latent_dim,
        spec.intervals,
        2,
    )
    .with_solver(solver)
    .with_field_width(width)
    .with_horizon(spec.horizon);
    FieldModel::new(cfg, rng)
}

/// Endpoint-only vs field-supervised flow on the teacher task, plus the
/// step-refinement check with and without solver consistency.
pub fn teacherflow_experiment(exp: &TeacherflowExp, seed: u64) -> Result<TeacherflowResult> {
    exp.spec.validate()?;
    exp.field.validate()?;
    let rng = Rng::new(seed);
    let train_set = generate_dataset(&exp.spec, exp.samples, Task::A, 0.0, &rng.stream("train"))?;
    let test_set = generate_dataset(
        &exp.spec,
        exp.test_samples,
        Task::A,
        0.0,
        &rng.stream("test"),
    )?;
    let init = teacher_model(
        &exp.spec,
        Method::Rk4,
        exp.field_width,
        &rng.stream("model"),
    )?;
    let mut rows = Vec::new();
    for weights in [LossWeights::default(), exp.field] {
        let obj = TeacherObjective::new(&init, &train_set, &test_set, weights)?;
        let mut m = init.clone();
        let tc = TrainConfig {
            lr: exp.lr,
            epochs: exp.epochs,
            batch_size: exp.batch_size,
            log_conflict: false,
            seed,
            ..Default::default()
        };
        train(m.params_mut(), &obj, &tc)?;
        rows.push(TeacherRow::from(evaluate_field_recovery(&m, &test_set)?));
    }
    let field = rows.pop().expect("two runs");
    let endpoint = rows.pop().expect("two runs");
    let refinement = if exp.refinement.enabled {
        Some(refinement_experiment(
            &exp.spec,
            &exp.refinement,
            exp.field_width,
            seed,
        )?)
    } else {
        None
    };
    Ok(TeacherflowResult {
        acc_gap: (field.acc - endpoint.acc).abs(),
        traj_ratio: endpoint.traj_rmse / field.traj_rmse,
        deriv_ratio: endpoint.deriv_rmse / field.deriv_rmse,
        endpoint,
        field,
        refinement,
    })
}

pub fn refinement_experiment(
    spec: &TeacherSpec,
    exp: &RefinementExp,
    width: usize,
    seed: u64,
) -> Result<RefinementResult> {
    let rng = Rng::new(seed).stream("refinement");
    let train_set = generate_dataset(spec, exp.samples, Task::A, 0.0, &rng.stream("train"))?;
    let test_set = generate_dataset(spec, exp.test_samples, Task::A, 0.0, &rng.stream("test"))?;
    let init = teacher_model(spec, exp.method, width, &rng.stream("model"))?;
    let mut out = Vec::new();
    for gamma in [0.0, exp.gamma] {
        let weights = LossWeights {
            gamma,
            ..Default::default()
        };
        let obj = TeacherObjective::new(&init, &train_set, &test_set, weights)?;
        let mut m = init.clone();
        let tc = TrainConfig {
            lr: exp.lr,
            epochs: exp.epochs,
            batch_size: exp.batch_size,
            log_conflict: false,
            seed,
            ..Default::default()
        };
        train(m.params_mut(), &obj, &tc)?;
        let acc = accuracy(&m.logits(&test_set.x)?, &test_set.labels)?;
        out.push((
            acc,
            refinement_gap(&m, &test_set.x, 2)?,
            refinement_gap(&m, &test_set.x, 4)?,
        ));
    }
    Ok(RefinementResult {
        task_acc: out[0].0,
        solver_acc: out[1].0,
        task_gap_2x: out[0].1,
        task_gap_4x: out[0].2,
        solver_gap_2x: out[1].1,
        solver_gap_4x: out[1].2,
    })
}

// ------------------------------------------------------------------------ pde

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeExp {
    pub families: Vec<PdeFamily>,
    pub samples: usize,
    pub train_samples: usize,
    pub models: Vec<ModelClass>,
    /// Corrupted datasets M3 is additionally trained on.
    pub controls: Vec<Control>,
    /// Standard deviation of the initial-state perturbation.
    pub perturb: f64,
    pub model: PdeModelConfig,
}

impl Default for PdeExp {
    fn default() -> Self {
        PdeExp {
            families: vec![PdeFamily::A, PdeFamily::B],
            samples: 250,
            train_samples: 200,
            models: ModelClass::ALL.to_vec(),
            controls: Vec::new(),
            perturb: 0.01,
            model: PdeModelConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeCheck {
    pub family: PdeFamily,
    /// T = 2 MSE of M4 over M1.
    pub m4_over_m1: Option<f64>,
    pub m3_energy_r: Option<f64>,
    /// M3 regrid error over its T = 2 MSE.
    pub m3_regrid_ratio: Option<f64>,
    /// Endpoint MSE of M3 trained on shuffled time labels over normal M3.
    pub shuffled_over_m3: Option<f64>,
    pub random_pair_over_m3: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeResult {
    pub rows: Vec<PdeRow>,
    pub checks: Vec<PdeCheck>,
}

fn control_label(c: Control) -> &'static str {
    match c {
        Control::RandomPair => "M3/random_pair",
        Control::ShuffledTime => "M3/shuffled_time",
    }
}

pub fn pde_experiment(exp: &PdeExp, seed: u64) -> Result<PdeResult> {
    if exp.train_samples == 0 || exp.train_samples >= exp.samples {
        return Err(invalid("need 0 < train_samples < samples"));
    }
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &family in &exp.families {
        let spec = PdeSpec::family(family);
        let rng = Rng::new(seed).substream("family", family as u64);
        let data = generate_pde_dataset(&spec, exp.samples, &rng.stream("data"))?;
        let (train_set, test_set) = data.split(exp.train_samples)?;
        let reference = evaluate_pde(
            &ReferenceModel { spec: spec.clone() },
            &test_set,
            exp.perturb,
            &rng,
        )?;
        rows.push(PdeRow::new(family, "reference", &reference));
        let mut found = std::collections::BTreeMap::new();
        for &class in &exp.models {
            let tc = PdeModelConfig::train_config(class, seed);
            let (model, _) =
                train_pde_model(class, &train_set, &exp.model, &tc, &rng.stream("init"))?;
            let m = evaluate_pde(&model, &test_set, exp.perturb, &rng)?;
            found.insert(class.name(), m.clone());
            rows.push(PdeRow::new(family, class.name(), &m));
        }
        let mut controls = std::collections::BTreeMap::new();
        for &control in &exp.controls {
            let corrupted = negative_control(&train_set, control, &rng.stream("control"))?;
            let tc = PdeModelConfig::train_config(ModelClass::M3, seed);
            let (model, _) = train_pde_model(
                ModelClass::M3,
                &corrupted,
                &exp.model,
                &tc,
                &rng.stream("init"),
            )?;
            let m = evaluate_pde(&model, &test_set, exp.perturb, &rng)?;
            controls.insert(control_label(control), m.endpoint_mse);
            rows.push(PdeRow::new(family, control_label(control), &m));
        }
        let m1 = found.get("M1");
        let m3 = found.get("M3");
        let m4 = found.get("M4");
        let over_m3 = |label: &str| Some(controls.get(label)? / m3?.endpoint_mse);
        checks.push(PdeCheck {
            family,
            m4_over_m1: m4.zip(m1).map(|(a, b)| a.final_mse / b.final_mse),
            m3_energy_r: m3.and_then(|m| m.energy_r),
            m3_regrid_ratio: m3.and_then(|m| Some(m.regrid? / m.final_mse)),
            shuffled_over_m3: over_m3(control_label(Control::ShuffledTime)),
            random_pair_over_m3: over_m3(control_label(Control::RandomPair)),
        });
    }
    Ok(PdeResult { rows, checks })
}

// --------------------------------------------------------------------- reveal

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevealExp {
    pub model: RevealConfig,
    pub variants: Vec<RevealVariant>,
    /// Reveal weight multiplier of the extra high-pressure run.
    pub pressure_multiplier: f64,
}

impl Default for RevealExp {
    fn default() -> Self {
        RevealExp {
            model: RevealConfig::default(),
            variants: RevealVariant::ALL.to_vec(),
            pressure_multiplier: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealResult {
    pub held_out_path: String,
    pub runs: Vec<RevealOutcome>,
    /// Reveal-only run at `lambda_r × pressure_multiplier`.
    pub pressure: RevealOutcome,
    /// Held-out-path accuracy of reveal minus task-only.
    pub unseen_gain: Option<f64>,
    /// Logit path sensitivity of task-only over reveal.
    pub sens_reduction: Option<f64>,
    pub pressure_collapsed: bool,
    /// Logit path sensitivity of the pressure run below the task-only run.
    pub pressure_sens_below_task: Option<bool>,
}

pub fn reveal_experiment(exp: &RevealExp, seed: u64) -> Result<(RevealData, RevealResult)> {
    let cfg = RevealConfig {
        seed,
        ..exp.model.clone()
    };
    let data = RevealData::build(&cfg)?;
    let runs = exp
        .variants
        .iter()
        .map(|&v| Ok(run_reveal(&cfg, &data, v)?.1))
        .collect::<Result<Vec<_>>>()?;
    let pressure_cfg = RevealConfig {
        lambda_r: cfg.lambda_r * exp.pressure_multiplier,
        ..cfg.clone()
    };
    let pressure = run_reveal(&pressure_cfg, &data, RevealVariant::Reveal)?.1;
    let find = |v: RevealVariant| runs.iter().find(|r| r.variant == v);
    let task = find(RevealVariant::Task);
    let reveal = find(RevealVariant::Reveal);
    let result = RevealResult {
        held_out_path: data.unseen().id.clone(),
        unseen_gain: task
            .zip(reveal)
            .map(|(t, r)| r.metrics.unseen_acc - t.metrics.unseen_acc),
        sens_reduction: task
            .zip(reveal)
            .map(|(t, r)| t.metrics.path_sens_logit / r.metrics.path_sens_logit),
        pressure_collapsed: pressure.metrics.collapse.collapsed,
        pressure_sens_below_task: task
            .map(|t| pressure.metrics.path_sens_logit < t.metrics.path_sens_logit),
        runs,
        pressure,
    };
    Ok((data, result))
}

// ------------------------------------------------------------------ continual

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinualExp {
    pub model: ContinualConfig,
    pub phases: Vec<usize>,
    pub budgets: Vec<usize>,
}

impl Default for ContinualExp {
    fn default() -> Self {
        ContinualExp {
            model: ContinualConfig::default(),
            phases: vec![0, 1, 4],
            budgets: vec![200],
        }
    }
}

pub fn continual_experiment(exp: &ContinualExp, seed: u64) -> Result<PhaseOutputs> {
    let cfg = ContinualConfig {
        seed,
        ..exp.model.clone()
    };
    PhaseOutputs::run(&cfg, &exp.phases, &exp.budgets)
}

// --------------------------------------------------------------------- pareto

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParetoExp {
    pub spec: TeacherSpec,
    pub samples: usize,
    pub test_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub field_width: usize,
    pub field: LossWeights,
    pub algorithms: Vec<Algorithm>,
    pub segments: usize,
}

impl Default for ParetoExp {
    fn default() -> Self {
        ParetoExp {
            spec: TeacherSpec::default(),
            samples: 300,
            test_samples: 100,
            epochs: 60,
            batch_size: 50,
            lr: 1e-2,
            field_width: 16,
            field: LossWeights {
                alpha: 1.0,
                beta: 1.0,
                ..Default::default()
            },
            algorithms: Algorithm::ALL.to_vec(),
            segments: 2,
        }
    }
}

/// One Pareto row per algorithm, each with the conflict log enabled.
pub fn pareto_experiment(exp: &ParetoExp, seed: u64) -> Result<Vec<ParetoRow>> {
    let rng = Rng::new(seed);
    let train_set = generate_dataset(&exp.spec, exp.samples, Task::A, 0.0, &rng.stream("train"))?;
    let test_set = generate_dataset(
        &exp.spec,
        exp.test_samples,
        Task::A,
        0.0,
        &rng.stream("test"),
    )?;
    let init = teacher_model(
        &exp.spec,
        Method::Rk4,
        exp.field_width,
        &rng.stream("model"),
    )?;
    let obj = TeacherObjective::new(&init, &train_set, &test_set, exp.field)?;
    exp.algorithms
        .iter()
        .map(|&alg| {
            let mut m = init.clone();
            let tc = TrainConfig {
                algorithm: alg,
                lr: exp.lr,
                epochs: exp.epochs,
                batch_size: exp.batch_size,
                segments: exp.segments,
                log_conflict: true,
                seed,
                ..Default::default()
            };
            let out = train(m.params_mut(), &obj, &tc)?;
            Ok(ParetoRow::from_outcome(alg, &out))
        })
        .collect()
}

// ------------------------------------------------------------- metrics report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsReportExp {
    pub families: Vec<Family>,
    pub classes: usize,
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
    /// Singular values per layer Jacobian.
    pub spectrum_rank: usize,
    /// Test rows whose spectra are averaged.
    pub spectrum_rows: usize,
}

impl Default for MetricsReportExp {
    fn default() -> Self {
        MetricsReportExp {
            families: Family::ALL.to_vec(),
            classes: 4,
            difficulty: Difficulty::Medium,
            ambient_dim: 16,
            intrinsic_dim: 3,
            train_per_class: 50,
            test_per_class: 25,
            hidden: 16,
            depth: 4,
            epochs: 30,
            batch_size: 32,
            lr: 3e-3,
            spectrum_rank: 4,
            spectrum_rows: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: Family,
    pub accuracy: f64,
    pub ece: f64,
    pub report: FieldReport,
}

/// Cross-entropy classification over a labeled set.
struct Classifier<'a> {
    model: &'a FieldModel,
    train: &'a LabeledSet,
    test: &'a LabeledSet,
}

impl Objective for Classifier<'_> {
    fn num_samples(&self) -> usize {
        self.train.len()
    }

    fn losses(&self, tape: &Tape, p: &[Var], req: &LossRequest) -> Result<LossVars> {
        let x = tape.constant(self.train.x.select_rows(req.batch)?)?;
        let labels: Vec<usize> = req.batch.iter().map(|&i| self.train.labels[i]).collect();
        let logits = self.model.forward_ops(tape, p, &x)?.logits;
        Ok(LossVars {
            task: Some(loss_task(tape, &logits, &labels)?),
            field: None,
        })
    }

    fn evaluate(&self, params: &ParamSet) -> Result<EpochMetrics> {
        let mut m = self.model.clone();
        m.params_mut().set_theta(params.theta())?;
        Ok(EpochMetrics {
            accuracy: Some(accuracy(&m.logits(&self.test.x)?, &self.test.labels)?),
            ..Default::default()
        })
    }
}

/// Trains each family briefly on manifold data and reports its geometry and
/// calibration on the test set, with Jacobian spectra averaged over the
/// first `spectrum_rows` test rows.
pub fn metrics_report_experiment(exp: &MetricsReportExp, seed: u64) -> Result<Vec<FamilyReport>> {
    let rng = Rng::new(seed);
    let spec = ManifoldSpec::preset(
        exp.difficulty,
        exp.classes,
        exp.ambient_dim,
        exp.intrinsic_dim,
        exp.train_per_class,
    );
    let g = ManifoldGenerator::new(&spec, &rng.stream("manifold"))?;
    let train_set = g.sample(exp.train_per_class, &rng.stream("train"))?;
    let test_set = g.sample(exp.test_per_class, &rng.stream("test"))?;
    exp.families
        .iter()
        .map(|&family| {
            let mut cfg =
                ModelConfig::new(family, exp.ambient_dim, exp.hidden, exp.depth, exp.classes);
            if family == Family::Continuous {
                cfg = cfg.with_solver(SolverSpec::new(Method::Rk4, exp.depth, 0.0, 1.0)?);
            }
            let init = FieldModel::new(cfg, &rng.stream("model"))?;
            let obj = Classifier {
                model: &init,
                train: &train_set,
                test: &test_set,
            };
            let mut m = init.clone();
            let tc = TrainConfig {
                lr: exp.lr,
                epochs: exp.epochs,
                batch_size: exp.batch_size,
                field_weight: 0.0,
                log_conflict: false,
                seed,
                ..Default::default()
            };
            train(m.params_mut(), &obj, &tc)?;
            let pass = m.forward(&test_set.x)?;
            let mut report = FieldReport::from_trajectory(&Trajectory::new(pass.hidden)?);
            let mut srng = rng.stream("spectrum");
            let rows = exp.spectrum_rows.min(test_set.len());
            let mut wdist = Vec::new();
            let mut entropy = vec![0.0; m.num_layers()];
            for r in 0..rows {
                let profile = spectral_profile(
                    &m,
                    &test_set.x.select_rows(&[r])?,
                    exp.spectrum_rank,
                    &mut srng,
                )?;
                wdist.extend(profile.adjacent_wdist);
                for (e, v) in entropy.iter_mut().zip(&profile.entropy) {
                    *e += v / rows as f64;
                }
            }
            report.jac_wdist =
                (!wdist.is_empty()).then(|| wdist.iter().sum::<f64>() / wdist.len() as f64);
            report.spectral_entropy = (rows > 0).then_some(entropy);
            if let Some(spec) = m.config().solver {
                let specs = [
                    spec,
                    SolverSpec::new(Method::Rk4, 2 * spec.steps, spec.t0, spec.t1)?,
                ];
                report.solver_err = Some(solver_consistency(&m, &test_set.x, &specs)?);
            }
            Ok(FamilyReport {
                family,
                accuracy: accuracy(&pass.logits, &test_set.labels)?,
                ece: calibration_ece(&pass.logits, &test_set.labels, ECE_BINS)?,
                report,
            })
        })
        .collect()
}
