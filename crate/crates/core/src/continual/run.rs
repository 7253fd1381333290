use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::buffer::{reservoir_indices, Buffer};
use super::metrics::{metrics_aa_bwt_fwt, AccuracyMatrix};
use super::{ContinualConfig, LayerGroup, Method, TaskSequence};
use crate::error::{invalid, Result};
use crate::fieldlosses::{kl_rows, loss_fpr_group_ops, loss_task_masked, value_and_grad_model};
use crate::fieldmetrics::{frs, jrs, FieldReport, Trajectory};
use crate::gradcore::{Ops, Rng, Tape, Tensor, Var};
use crate::netzoo::FieldModel;
use crate::trainlab::{train, LossRequest, LossVars, Objective, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    /// Accuracy on tasks `0..=task` after training it.
    pub accuracies: Vec<f64>,
    /// Geometry of the new task's anchor trajectories, with `frs`/`jrs`
    /// averaged over earlier tasks against their own snapshots.
    pub field: FieldReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub budget: usize,
    pub seed: u64,
    pub accuracy: AccuracyMatrix,
    pub random_baseline: Vec<f64>,
    pub aa: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    /// Mean over `(k, t > k)` of retention of task `k` after task `t`
    /// against the snapshot taken right after task `k`.
    pub frs: f64,
    pub jrs: f64,
    /// The same restricted to the final model.
    pub frs_final: f64,
    pub jrs_final: f64,
    pub tasks: Vec<TaskRecord>,
}

/// `F_sum` and `Σ_k F_k θ_k / F_sum`: the summed per-task EWC penalties
/// `Σ_k F_k (θ − θ_k)²` equal `F_sum (θ − θ̄)²` up to a constant.
#[derive(Clone, Debug, Default)]
struct EwcState {
    fisher: Vec<f64>,
    weighted: Vec<f64>,
}

impl EwcState {
    fn add(&mut self, fisher: &[f64], theta: &[f64]) {
        if self.fisher.is_empty() {
            self.fisher = vec![0.0; fisher.len()];
            self.weighted = vec![0.0; fisher.len()];
        }
        for i in 0..fisher.len() {
            self.fisher[i] += fisher[i];
            self.weighted[i] += fisher[i] * theta[i];
        }
    }

    fn center(&self) -> Vec<f64> {
        self.fisher
            .iter()
            .zip(&self.weighted)
            .map(|(f, w)| if *f > 0.0 { w / f } else { 0.0 })
            .collect()
    }
}

fn selection(classes: usize, cols: &[usize]) -> Tensor {
    let mut s = Tensor::zeros(&[classes, cols.len()]);
    for (j, &c) in cols.iter().enumerate() {
        s.set(c, j, 1.0);
    }
    s
}

fn accumulate(tape: &Tape, acc: Option<Var>, term: Var, w: f64) -> Result<Option<Var>> {
    let t = tape.scale(&term, w)?;
    Ok(Some(match acc {
        Some(a) => tape.add(&a, &t)?,
        None => t,
    }))
}

struct ContinualObjective<'a> {
    method: Method,
    cfg: &'a ContinualConfig,
    model: &'a FieldModel,
    x: &'a Tensor,
    labels: &'a [usize],
    seen: Vec<usize>,
    old_classes: Vec<usize>,
    prev: Option<&'a FieldModel>,
    replay: Option<(Tensor, Vec<usize>, Option<Tensor>)>,
    anchors: Option<Tensor>,
    ewc: Option<(Vec<Tensor>, Vec<Tensor>)>,
    frozen: Vec<bool>,
    group: Vec<usize>,
    rng: RefCell<Rng>,
}

impl ContinualObjective<'_> {
    fn params(&self, tape: &Tape, p: &[Var]) -> Result<Vec<Var>> {
        p.iter()
            .zip(&self.frozen)
            .map(|(v, &f)| {
                if f {
                    tape.constant(tape.value(v))
                } else {
                    Ok(*v)
                }
            })
            .collect()
    }

    fn draw(&self, n: usize, k: usize) -> Vec<usize> {
        let mut r = self.rng.borrow_mut();
        (0..k.min(n)).map(|_| r.below(n)).collect()
    }

    fn task_loss(&self, tape: &Tape, p: &[Var], batch: &[usize]) -> Result<Var> {
        let cfg = self.cfg;
        let m = self.model;
        let xb = self.x.select_rows(batch)?;
        let yb: Vec<usize> = batch.iter().map(|&i| self.labels[i]).collect();
        let xv = tape.constant(xb.clone())?;
        let logits = m.forward_ops(tape, p, &xv)?.logits;
        let mut total = Some(loss_task_masked(tape, &logits, &yb, &self.seen)?);

        if let Some((fisher, center)) = &self.ewc {
            let mut pen: Option<Var> = None;
            for ((pv, f), c) in p.iter().zip(fisher).zip(center) {
                let d = tape.sub(pv, &tape.constant(c.clone())?)?;
                let term = tape.sum(&tape.mul(&tape.square(&d)?, &tape.constant(f.clone())?)?)?;
                pen = accumulate(tape, pen, term, 1.0)?;
            }
            if let Some(pen) = pen {
                total = accumulate(tape, total, pen, 0.5 * cfg.lambda_ewc)?;
            }
        }

        if let (Method::Lwf, Some(prev)) = (self.method, self.prev) {
            let sel = selection(m.config().classes, &self.old_classes);
            let temp = cfg.lwf_temperature;
            let old = prev.logits(&xb)?.matmul(&sel)?.scale(1.0 / temp);
            let new = tape.scale(&tape.matmul(&logits, &tape.constant(sel)?)?, 1.0 / temp)?;
            let kl = kl_rows(tape, &tape.constant(old)?, &new)?;
            let w = cfg.lwf_weight * temp * temp / batch.len() as f64;
            total = accumulate(tape, total, kl, w)?;
        }

        if let Some((rx, ry, rlogits)) = &self.replay {
            let ce_weight = if self.method.stores_logits() {
                cfg.derpp_beta
            } else {
                1.0
            };
            let idx = self.draw(ry.len(), cfg.replay_batch);
            let bx = tape.constant(rx.select_rows(&idx)?)?;
            let by: Vec<usize> = idx.iter().map(|&i| ry[i]).collect();
            let out = m.forward_ops(tape, p, &bx)?.logits;
            let ce = loss_task_masked(tape, &out, &by, &self.seen)?;
            total = accumulate(tape, total, ce, ce_weight)?;
            if let Some(stored) = rlogits {
                let idx = self.draw(ry.len(), cfg.replay_batch);
                let bx = tape.constant(rx.select_rows(&idx)?)?;
                let out = m.forward_ops(tape, p, &bx)?.logits;
                let target = tape.constant(stored.select_rows(&idx)?)?;
                let mse = tape.mean(&tape.square(&tape.sub(&out, &target)?)?)?;
                total = accumulate(tape, total, mse, cfg.derpp_alpha)?;
            }
        }
        Ok(total.expect("cross-entropy term"))
    }

    fn field_loss(&self, tape: &Tape, p: &[Var]) -> Result<Option<Var>> {
        let (Some((use_h, use_j)), Some(prev), Some(anchors)) =
            (self.method.fpr_terms(), self.prev, &self.anchors)
        else {
            return Ok(None);
        };
        let cfg = self.cfg;
        let idx = self.draw(anchors.rows(), cfg.anchor_batch);
        let batch = anchors.select_rows(&idx)?;
        let width = self.model.config().hidden_dim;
        let probes: Vec<Tensor> = {
            let mut r = self.rng.borrow_mut();
            (0..cfg.fpr_probes)
                .map(|_| r.rademacher_tensor(&[idx.len(), width]))
                .collect()
        };
        let lh = if use_h { cfg.lambda_h } else { 0.0 };
        let lj = if use_j { cfg.lambda_j } else { 0.0 };
        let v = loss_fpr_group_ops(
            tape,
            prev,
            self.model,
            p,
            &batch,
            &probes,
            lh,
            lj,
            &self.group,
        )?;
        Ok(Some(v))
    }
}

impl Objective for ContinualObjective<'_> {
    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn losses(&self, tape: &Tape, p: &[Var], req: &LossRequest) -> Result<LossVars> {
        let p = self.params(tape, p)?;
        Ok(LossVars {
            task: if req.task {
                Some(self.task_loss(tape, &p, req.batch)?)
            } else {
                None
            },
            field: if req.field {
                self.field_loss(tape, &p)?
            } else {
                None
            },
        })
    }
}

/// Accuracy with prediction restricted to `candidates`.
fn masked_accuracy(
    m: &FieldModel,
    x: &Tensor,
    labels: &[usize],
    candidates: &[usize],
) -> Result<f64> {
    let logits = m.logits(x)?;
    let mut hits = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let best = candidates
            .iter()
            .copied()
            .max_by(|&a, &b| logits.get(r, a).total_cmp(&logits.get(r, b)))
            .ok_or_else(|| invalid("no candidate classes"))?;
        hits += usize::from(best == y);
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Diagonal empirical Fisher of the task's cross-entropy at the current θ.
fn empirical_fisher(
    m: &FieldModel,
    x: &Tensor,
    labels: &[usize],
    classes: &[usize],
) -> Result<Vec<f64>> {
    let mut fisher = vec![0.0; m.num_params()];
    for (r, &y) in labels.iter().enumerate() {
        let row = x.select_rows(&[r])?;
        let (_, g) = value_and_grad_model(m, |tape, p| {
            let logits = m.forward_ops(tape, p, &tape.constant(row.clone())?)?.logits;
            loss_task_masked(tape, &logits, &[y], classes)
        })?;
        for (f, gi) in fisher.iter_mut().zip(g) {
            *f += gi * gi;
        }
    }
    let n = labels.len() as f64;
    fisher.iter_mut().for_each(|f| *f /= n);
    Ok(fisher)
}

/// Splits a flat vector into the model's parameter tensors.
fn split_like(m: &FieldModel, flat: &[f64]) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    let mut at = 0;
    for (_, t) in m.params().tensors() {
        let n = t.data().len();
        out.push(Tensor::new(t.shape().to_vec(), flat[at..at + n].to_vec())?);
        at += n;
    }
    Ok(out)
}

/// Held-out inputs of each task used for retention metrics.
pub(crate) fn metric_anchors(
    seq: &TaskSequence,
    cfg: &ContinualConfig,
    rng: &Rng,
) -> Result<Vec<Tensor>> {
    seq.tasks
        .iter()
        .enumerate()
        .map(|(k, task)| {
            let mut idx = rng
                .stream("metric_anchors")
                .substream("task", k as u64)
                .permutation(task.test.len());
            idx.truncate(cfg.metric_anchors);
            idx.sort_unstable();
            task.test.x.select_rows(&idx)
        })
        .collect()
}

/// Trains `method` over the sequence and returns the result together with
/// the model snapshot taken after each task.
pub fn run_method_snapshots(
    method: Method,
    seq: &TaskSequence,
    cfg: &ContinualConfig,
) -> Result<(MethodResult, Vec<FieldModel>)> {
    cfg.validate()?;
    if method.needs_memory() && cfg.budget == 0 {
        return Err(invalid(format!(
            "{} needs a memory budget > 0",
            method.name()
        )));
    }
    let rng = Rng::new(cfg.seed);
    let mut model = FieldModel::new(cfg.model_config(), &rng.stream("init"))?;
    let anchors = metric_anchors(seq, cfg, &rng)?;
    let group = match method {
        Method::ErFprLate => LayerGroup::Late,
        _ => cfg.fpr_layers,
    }
    .layers(model.num_layers());
    let frozen: Vec<bool> = model
        .params()
        .names()
        .map(|n| cfg.freeze_head && n.starts_with("head."))
        .collect();

    let mut buffer = Buffer::new(cfg.budget);
    let mut fpr_anchors: Vec<Tensor> = Vec::new();
    let mut ewc = EwcState::default();
    let mut snapshots: Vec<FieldModel> = Vec::new();
    let mut acc = AccuracyMatrix::default();
    let mut baseline = Vec::new();
    let mut records = Vec::new();
    let (mut frs_all, mut jrs_all) = (Vec::new(), Vec::new());

    for (t, task) in seq.tasks.iter().enumerate() {
        let seen = seq.seen_classes(t);
        acc.pre_training.push(masked_accuracy(
            &model,
            &task.test.x,
            &task.test.labels,
            &seen,
        )?);
        baseline.push(1.0 / seen.len() as f64);

        let prev = snapshots.last().cloned();
        let replay = if method.replays() {
            buffer.concat()?
        } else {
            None
        };
        let fpr_pool = if method.fpr_terms().is_some() && !fpr_anchors.is_empty() {
            Some(Tensor::stack_rows(&fpr_anchors)?)
        } else {
            None
        };
        let ewc_terms = (method == Method::Ewc && !ewc.fisher.is_empty())
            .then(|| {
                Ok::<_, crate::FieldError>((
                    split_like(&model, &ewc.fisher)?,
                    split_like(&model, &ewc.center())?,
                ))
            })
            .transpose()?;
        let template = model.clone();
        let obj = ContinualObjective {
            method,
            cfg,
            model: &template,
            x: &task.train.x,
            labels: &task.train.labels,
            seen: seen.clone(),
            old_classes: if t > 0 {
                seq.seen_classes(t - 1)
            } else {
                Vec::new()
            },
            prev: prev.as_ref(),
            replay,
            anchors: fpr_pool.clone(),
            ewc: ewc_terms,
            frozen: frozen.clone(),
            group: group.clone(),
            rng: RefCell::new(rng.stream("objective").substream("task", t as u64)),
        };
        let use_field = fpr_pool.is_some() && prev.is_some() && cfg.lambda_fpr > 0.0;
        let tc = TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            field_weight: if use_field { cfg.lambda_fpr } else { 0.0 },
            log_conflict: false,
            seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(t as u64),
            ..Default::default()
        };
        train(model.params_mut(), &obj, &tc)?;

        let row = seq.tasks[..=t]
            .iter()
            .map(|k| masked_accuracy(&model, &k.test.x, &k.test.labels, &seen))
            .collect::<Result<Vec<_>>>()?;
        acc.matrix.push(row.clone());

        if method == Method::Ewc {
            let f = empirical_fisher(&model, &task.train.x, &task.train.labels, &task.classes)?;
            ewc.add(&f, model.theta());
        }
        if method.needs_memory() {
            let mut r = rng.stream("memory").substream("task", t as u64);
            if method.replays() {
                let logits = if method.stores_logits() {
                    Some(model.logits(&task.train.x)?)
                } else {
                    None
                };
                buffer.add_task(
                    t,
                    &task.train.x,
                    &task.train.labels,
                    logits.as_ref(),
                    &mut r,
                )?;
            } else {
                let idx = reservoir_indices(task.train.len(), cfg.budget, &mut r);
                fpr_anchors.push(task.train.x.select_rows(&idx)?);
            }
            if method.replays() && method.fpr_terms().is_some() {
                fpr_anchors.push(buffer.memories.last().expect("just stored").x.clone());
            }
        }

        let (mut f_sum, mut j_sum) = (0.0, 0.0);
        for (k, snap) in snapshots.iter().enumerate() {
            let mut r = rng
                .stream("jrs")
                .substream("pair", (k * seq.len() + t) as u64);
            let f = frs(snap, &model, &anchors[k])?;
            let j = jrs(snap, &model, &anchors[k], cfg.jrs_probes, &mut r)?;
            frs_all.push((t, f));
            jrs_all.push((t, j));
            f_sum += f;
            j_sum += j;
        }
        let pass = model.forward(&anchors[t])?;
        let mut field = FieldReport::from_trajectory(&Trajectory::new(pass.hidden)?);
        if t > 0 {
            field.frs = Some(f_sum / t as f64);
            field.jrs = Some(j_sum / t as f64);
        }
        records.push(TaskRecord {
            task: t,
            accuracies: row,
            field,
        });
        snapshots.push(model.clone());
        log::debug!("{} task {t}: acc {:?}", method.name(), acc.matrix[t]);
    }

    let transfer = metrics_aa_bwt_fwt(&acc, &baseline)?;
    let last = seq.len() - 1;
    let mean = |v: &[(usize, f64)], only_last: bool| -> f64 {
        let vals: Vec<f64> = v
            .iter()
            .filter(|(t, _)| !only_last || *t == last)
            .map(|p| p.1)
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let result = MethodResult {
        method,
        budget: cfg.budget,
        seed: cfg.seed,
        accuracy: acc,
        random_baseline: baseline,
        aa: transfer.aa,
        bwt: transfer.bwt,
        fwt: transfer.fwt,
        frs: mean(&frs_all, false),
        jrs: mean(&jrs_all, false),
        frs_final: mean(&frs_all, true),
        jrs_final: mean(&jrs_all, true),
        tasks: records,
    };
    Ok((result, snapshots))
}

pub fn run_method(
    method: Method,
    seq: &TaskSequence,
    cfg: &ContinualConfig,
) -> Result<MethodResult> {
    Ok(run_method_snapshots(method, seq, cfg)?.0)
}
