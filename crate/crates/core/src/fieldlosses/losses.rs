use crate::error::{invalid, shape_err, Result};
use crate::fieldmetrics::EPS;
use crate::gradcore::{Eval, Ops, Tape, Tensor, Var};
use crate::netzoo::{FieldModel, Pass};
use crate::odesolve::SolverSpec;

/// Evaluates `loss(tape, θ-vars)` and returns `(value, ∇θ)` in θ order.
pub fn value_and_grad_model(
    m: &FieldModel,
    loss: impl FnOnce(&Tape, &[Var]) -> Result<Var>,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let p = m.params().bind(&tape)?;
    let l = loss(&tape, &p)?;
    let value = tape.scalar_value(l);
    Ok((value, tape.grad(l)?.into_data()))
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(crate::FieldError::OutOfRange {
                index: y,
                limit: classes,
            });
        }
        t.set(r, y, 1.0);
    }
    Ok(t)
}

/// Mean cross-entropy of `logits` against integer labels.
pub fn loss_task<O: Ops>(ops: &O, logits: &O::V, labels: &[usize]) -> Result<O::V> {
    let s = ops.shape(logits);
    if s[0] != labels.len() || labels.is_empty() {
        return Err(shape_err(
            "loss_task",
            format!("{} rows vs {} labels", s[0], labels.len()),
        ));
    }
    let ls = ops.log_softmax(logits)?;
    let oh = ops.constant(one_hot(labels, s[1])?)?;
    ops.scale(&ops.sum(&ops.mul(&ls, &oh)?)?, -1.0 / labels.len() as f64)
}

/// Cross-entropy restricted to the columns `allowed`; labels must be members.
pub fn loss_task_masked<O: Ops>(
    ops: &O,
    logits: &O::V,
    labels: &[usize],
    allowed: &[usize],
) -> Result<O::V> {
    let classes = ops.shape(logits)[1];
    let mut select = Tensor::zeros(&[classes, allowed.len()]);
    for (j, &c) in allowed.iter().enumerate() {
        if c >= classes {
            return Err(crate::FieldError::OutOfRange {
                index: c,
                limit: classes,
            });
        }
        select.set(c, j, 1.0);
    }
    let local = labels
        .iter()
        .map(|y| {
            allowed
                .iter()
                .position(|c| c == y)
                .ok_or_else(|| invalid(format!("label {y} is outside the allowed classes")))
        })
        .collect::<Result<Vec<_>>>()?;
    let sub = ops.matmul(logits, &ops.constant(select)?)?;
    loss_task(ops, &sub, &local)
}

/// Row-wise `KL(softmax(a) ‖ softmax(b))`, summed over rows.
pub fn kl_rows<O: Ops>(ops: &O, a: &O::V, b: &O::V) -> Result<O::V> {
    let la = ops.log_softmax(a)?;
    let lb = ops.log_softmax(b)?;
    let pa = ops.exp(&la)?;
    ops.sum(&ops.mul(&pa, &ops.sub(&la, &lb)?)?)
}

/// Mean over rows of `‖h_p − h_q‖² + KL(σ(o_p) ‖ σ(o_q))`.
pub fn reveal_pair<O: Ops>(ops: &O, hp: &O::V, op: &O::V, hq: &O::V, oq: &O::V) -> Result<O::V> {
    let rows = ops.shape(hp)[0] as f64;
    let hidden = ops.sum(&ops.square(&ops.sub(hp, hq)?)?)?;
    let kl = kl_rows(ops, op, oq)?;
    ops.scale(&ops.add(&hidden, &kl)?, 1.0 / rows)
}

/// Reveal consistency averaged over the given ordered path pairs.
/// `views[p]` holds the same samples presented through path `p`.
pub fn loss_reveal_ops<O: Ops>(
    ops: &O,
    m: &FieldModel,
    p: &[O::V],
    views: &[O::V],
    pairs: &[(usize, usize)],
) -> Result<O::V> {
    if views.len() < 2 {
        return Err(invalid("reveal loss needs at least 2 paths"));
    }
    if pairs.is_empty() {
        return Err(invalid("reveal loss needs at least one path pair"));
    }
    let mut cache: Vec<Option<Pass<O::V>>> = vec![None; views.len()];
    let mut total: Option<O::V> = None;
    for &(a, b) in pairs {
        if a >= views.len() || b >= views.len() || a == b {
            return Err(invalid(format!("bad path pair ({a}, {b})")));
        }
        for i in [a, b] {
            if cache[i].is_none() {
                cache[i] = Some(m.forward_ops(ops, p, &views[i])?);
            }
        }
        let pa = cache[a].as_ref().expect("cached");
        let pb = cache[b].as_ref().expect("cached");
        let term = reveal_pair(
            ops,
            pa.hidden.last().expect("states"),
            &pa.logits,
            pb.hidden.last().expect("states"),
            &pb.logits,
        )?;
        total = Some(match total {
            Some(t) => ops.add(&t, &term)?,
            None => term,
        });
    }
    ops.scale(&total.expect("non-empty"), 1.0 / pairs.len() as f64)
}

/// Reveal loss over all ordered pairs of distinct views (evaluation form).
pub fn loss_reveal(m: &FieldModel, views: &[Tensor]) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..views.len())
        .flat_map(|a| {
            (0..views.len())
                .filter(move |&b| b != a)
                .map(move |b| (a, b))
        })
        .collect();
    let p = m.params().bind(&Eval)?;
    Ok(loss_reveal_ops(&Eval, m, &p, views, &pairs)?.item())
}

/// `mean_rows(‖h_T^{(1)} − h_T^{(2)}‖² + ‖o^{(1)} − o^{(2)}‖²)`; gradients
/// flow through both unrolled integrations.
pub fn loss_solver_ops<O: Ops>(
    ops: &O,
    m: &FieldModel,
    p: &[O::V],
    x: &O::V,
    s1: &SolverSpec,
    s2: &SolverSpec,
) -> Result<O::V> {
    let a = m.with_solver(*s1)?.forward_ops(ops, p, x)?;
    let b = m.with_solver(*s2)?.forward_ops(ops, p, x)?;
    let rows = ops.shape(x)[0] as f64;
    let dh = ops.sum(&ops.square(&ops.sub(
        a.hidden.last().expect("states"),
        b.hidden.last().expect("states"),
    )?)?)?;
    let dlog = ops.sum(&ops.square(&ops.sub(&a.logits, &b.logits)?)?)?;
    ops.scale(&ops.add(&dh, &dlog)?, 1.0 / rows)
}

pub fn loss_solver(m: &FieldModel, x: &Tensor, s1: &SolverSpec, s2: &SolverSpec) -> Result<f64> {
    let p = m.params().bind(&Eval)?;
    Ok(loss_solver_ops(&Eval, m, &p, x, s1, s2)?.item())
}

/// Per-row weights `1 / (‖δ_r‖² + ε)` broadcast to the probe's shape.
fn probe_weights(delta: &Tensor) -> Tensor {
    let cols = delta.cols();
    let mut w = Tensor::zeros(delta.shape());
    for r in 0..delta.rows() {
        let n2: f64 = delta.row_slice(r).iter().map(|v| v * v).sum();
        for c in 0..cols {
            w.set(r, c, 1.0 / (n2 + EPS));
        }
    }
    w
}

fn weighted_sq<O: Ops>(ops: &O, diff: &O::V, weights: &Tensor) -> Result<O::V> {
    ops.sum(&ops.mul(&ops.square(diff)?, &ops.constant(weights.clone())?)?)
}

/// Mean over `ℓ ≥ 1`, probes and rows of `‖J_ℓδ − J_{ℓ−1}δ‖² / (‖δ‖² + ε)`.
/// `probes` are `[rows, d]` directions shared by all layers.
pub fn loss_jac_ops<O: Ops>(
    ops: &O,
    m: &FieldModel,
    p: &[O::V],
    x: &O::V,
    probes: &[Tensor],
) -> Result<O::V> {
    let layers = m.num_layers();
    if layers < 2 {
        return Err(invalid("Jacobian smoothness needs at least 2 layers"));
    }
    if probes.is_empty() {
        return Err(invalid("Jacobian smoothness needs at least one probe"));
    }
    let widths = m.widths();
    if widths.iter().any(|&w| w != widths[0]) {
        return Err(shape_err("loss_jac", "all layers must share one width"));
    }
    let pass = m.forward_ops(ops, p, x)?;
    let rows = ops.shape(x)[0];
    let mut total: Option<O::V> = None;
    for delta in probes {
        if delta.shape() != [rows, widths[0]] {
            return Err(shape_err("loss_jac", format!("probe {:?}", delta.shape())));
        }
        let w = probe_weights(delta);
        let mut prev = m.layer_jvp_ops(ops, p, x, &pass.hidden[0], 0, delta)?;
        for l in 1..layers {
            let cur = m.layer_jvp_ops(ops, p, x, &pass.hidden[l], l, delta)?;
            let term = weighted_sq(ops, &ops.sub(&cur, &prev)?, &w)?;
            total = Some(match total {
                Some(t) => ops.add(&t, &term)?,
                None => term,
            });
            prev = cur;
        }
    }
    let count = (probes.len() * (layers - 1) * rows) as f64;
    ops.scale(&total.expect("non-empty"), 1.0 / count)
}

pub fn loss_jac(m: &FieldModel, x: &Tensor, probes: &[Tensor]) -> Result<f64> {
    let p = m.params().bind(&Eval)?;
    Ok(loss_jac_ops(&Eval, m, &p, x, probes)?.item())
}

fn check_aligned(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b || a == 0 {
        return Err(invalid(format!("{what}: {a} predictions vs {b} targets")));
    }
    Ok(())
}

/// `Σ_k ‖ẑ_k − z_k‖²` over matched time points, averaged over rows.
pub fn loss_traj_ops<O: Ops>(ops: &O, pred: &[O::V], teacher: &[Tensor]) -> Result<O::V> {
    check_aligned(pred.len(), teacher.len(), "loss_traj")?;
    let rows = ops.shape(&pred[0])[0] as f64;
    let mut total: Option<O::V> = None;
    for (zp, zt) in pred.iter().zip(teacher) {
        let term = ops.sum(&ops.square(&ops.sub(zp, &ops.constant(zt.clone())?)?)?)?;
        total = Some(match total {
            Some(t) => ops.add(&t, &term)?,
            None => term,
        });
    }
    ops.scale(&total.expect("non-empty"), 1.0 / rows)
}

pub fn loss_traj(pred: &[Tensor], teacher: &[Tensor]) -> Result<f64> {
    Ok(loss_traj_ops(&Eval, pred, teacher)?.item())
}

/// `Σ_k ‖f_θ(s_k, t_k) − f★_k‖²` averaged over rows, where `s_k` are the
/// evaluation states and `f★_k` the reference derivatives.
pub fn loss_deriv_ops<O, F>(
    ops: &O,
    field: F,
    states: &[O::V],
    times: &[f64],
    targets: &[Tensor],
) -> Result<O::V>
where
    O: Ops,
    F: Fn(&O::V, f64) -> Result<O::V>,
{
    check_aligned(states.len(), targets.len(), "loss_deriv")?;
    check_aligned(states.len(), times.len(), "loss_deriv times")?;
    let rows = ops.shape(&states[0])[0] as f64;
    let mut total: Option<O::V> = None;
    for ((s, &t), target) in states.iter().zip(times).zip(targets) {
        let f = field(s, t)?;
        let term = ops.sum(&ops.square(&ops.sub(&f, &ops.constant(target.clone())?)?)?)?;
        total = Some(match total {
            Some(acc) => ops.add(&acc, &term)?,
            None => term,
        });
    }
    ops.scale(&total.expect("non-empty"), 1.0 / rows)
}

/// Field-preservation regularizer against a frozen `old` model:
/// `λ_h · mean_{ℓ,x} ‖h_ℓ^old − h_ℓ‖² + λ_J · mean_{ℓ,δ,x} ‖J_ℓ^old δ − J_ℓ δ‖²/(‖δ‖²+ε)`.
/// Only `new`'s parameters `p` receive gradients.
#[allow(clippy::too_many_arguments)]
pub fn loss_fpr_ops<O: Ops>(
    ops: &O,
    old: &FieldModel,
    new: &FieldModel,
    p: &[O::V],
    anchors: &Tensor,
    probes: &[Tensor],
    lambda_h: f64,
    lambda_j: f64,
) -> Result<O::V> {
    let states: Vec<usize> = (0..=new.num_layers()).collect();
    let layers: Vec<usize> = (0..new.num_layers()).collect();
    fpr_terms(
        ops,
        old,
        new,
        p,
        anchors,
        probes,
        (lambda_h, lambda_j),
        &states,
        &layers,
    )
}

/// [`loss_fpr_ops`] restricted to the layers in `group`: the hidden term
/// compares the states those layers produce (`h_{ℓ+1}`), the Jacobian term
/// covers `J_ℓ` for `ℓ ∈ group`.
#[allow(clippy::too_many_arguments)]
pub fn loss_fpr_group_ops<O: Ops>(
    ops: &O,
    old: &FieldModel,
    new: &FieldModel,
    p: &[O::V],
    anchors: &Tensor,
    probes: &[Tensor],
    lambda_h: f64,
    lambda_j: f64,
    group: &[usize],
) -> Result<O::V> {
    if group.is_empty() {
        return Err(invalid("empty layer group"));
    }
    if let Some(&l) = group.iter().find(|&&l| l >= new.num_layers()) {
        return Err(crate::FieldError::OutOfRange {
            index: l,
            limit: new.num_layers(),
        });
    }
    let states: Vec<usize> = group.iter().map(|l| l + 1).collect();
    fpr_terms(
        ops,
        old,
        new,
        p,
        anchors,
        probes,
        (lambda_h, lambda_j),
        &states,
        group,
    )
}

#[allow(clippy::too_many_arguments)]
fn fpr_terms<O: Ops>(
    ops: &O,
    old: &FieldModel,
    new: &FieldModel,
    p: &[O::V],
    anchors: &Tensor,
    probes: &[Tensor],
    (lambda_h, lambda_j): (f64, f64),
    states: &[usize],
    layers: &[usize],
) -> Result<O::V> {
    if anchors.rows() == 0 {
        return Err(invalid("field preservation needs anchors"));
    }
    if old.widths() != new.widths() {
        return Err(shape_err(
            "loss_fpr",
            "old and new models differ in layer widths",
        ));
    }
    let x = ops.constant(anchors.clone())?;
    let old_pass = old.forward(anchors)?;
    let pass = new.forward_ops(ops, p, &x)?;
    let rows = anchors.rows() as f64;
    let mut hidden: Option<O::V> = None;
    for &s in states {
        let term = ops.sum(
            &ops.square(&ops.sub(&pass.hidden[s], &ops.constant(old_pass.hidden[s].clone())?)?)?,
        )?;
        hidden = Some(match hidden {
            Some(t) => ops.add(&t, &term)?,
            None => term,
        });
    }
    let mut total = ops.scale(
        &hidden.expect("states"),
        lambda_h / (rows * states.len() as f64),
    )?;
    if lambda_j > 0.0 {
        if probes.is_empty() {
            return Err(invalid("Jacobian preservation needs at least one probe"));
        }
        let widths = new.widths();
        let mut jac: Option<O::V> = None;
        for &l in layers {
            for delta in probes {
                if delta.shape() != [anchors.rows(), widths[l]] {
                    return Err(shape_err("loss_fpr", format!("probe {:?}", delta.shape())));
                }
                let j_old = old.layer_jvp_at(anchors, &old_pass.hidden[l], l, delta)?;
                let j_new = new.layer_jvp_ops(ops, p, &x, &pass.hidden[l], l, delta)?;
                let diff = ops.sub(&j_new, &ops.constant(j_old)?)?;
                let term = weighted_sq(ops, &diff, &probe_weights(delta))?;
                jac = Some(match jac {
                    Some(t) => ops.add(&t, &term)?,
                    None => term,
                });
            }
        }
        let count = (layers.len() * probes.len()) as f64 * rows;
        total = ops.add(&total, &ops.scale(&jac.expect("layers"), lambda_j / count)?)?;
    }
    Ok(total)
}

pub fn loss_fpr(
    old: &FieldModel,
    new: &FieldModel,
    anchors: &Tensor,
    probes: &[Tensor],
    lambda_h: f64,
    lambda_j: f64,
) -> Result<f64> {
    let p = new.params().bind(&Eval)?;
    Ok(loss_fpr_ops(&Eval, old, new, &p, anchors, probes, lambda_h, lambda_j)?.item())
}
