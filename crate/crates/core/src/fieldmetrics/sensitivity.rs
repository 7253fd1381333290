use crate::error::{invalid, shape_err, Result};
use crate::gradcore::Tensor;
use crate::netzoo::{Family, FieldModel};
use crate::odesolve::SolverSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    /// Terminal hidden state `h_L`.
    Hidden,
    /// Pre-softmax logits.
    Logit,
}

/// Mean over samples and unordered path pairs of the row-wise distance
/// between per-path outputs. `outputs[p]` holds one row per sample.
pub fn pairwise_path_distance(outputs: &[Tensor]) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(invalid("path sensitivity needs at least 2 paths"));
    }
    let shape = outputs[0].shape();
    if outputs.iter().any(|o| o.shape() != shape) {
        return Err(shape_err(
            "path_sensitivity",
            "per-path outputs differ in shape",
        ));
    }
    let rows = outputs[0].rows();
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..outputs.len() {
        for q in p + 1..outputs.len() {
            for r in 0..rows {
                let d: f64 = outputs[p]
                    .row_slice(r)
                    .iter()
                    .zip(outputs[q].row_slice(r))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                total += d.sqrt();
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Path sensitivity of `m`: `views[p]` is the batch of samples presented
/// through path `p` (same samples, same order, in every view).
pub fn path_sensitivity(m: &FieldModel, views: &[Tensor], level: Level) -> Result<f64> {
    if views.len() < 2 {
        return Err(invalid("path sensitivity needs at least 2 paths"));
    }
    let outputs = views
        .iter()
        .map(|v| {
            let pass = m.forward(v)?;
            Ok(match level {
                Level::Hidden => pass.hidden.last().cloned().expect("non-empty"),
                Level::Logit => pass.logits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pairwise_path_distance(&outputs)
}

/// Mean over samples and unordered spec pairs of
/// `‖h_T^{(1)} − h_T^{(2)}‖ + ‖o^{(1)} − o^{(2)}‖`.
pub fn solver_consistency(m: &FieldModel, x: &Tensor, specs: &[SolverSpec]) -> Result<f64> {
    if m.family() != Family::Continuous {
        return Err(invalid("solver consistency needs a continuous model"));
    }
    if specs.len() < 2 {
        return Err(invalid("solver consistency needs at least 2 specs"));
    }
    let ends = specs
        .iter()
        .map(|s| {
            let pass = m.with_solver(*s)?.forward(x)?;
            Ok((pass.hidden.last().cloned().expect("non-empty"), pass.logits))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = x.rows();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..ends.len() {
        for j in i + 1..ends.len() {
            let dh = ends[i].0.sub(&ends[j].0)?;
            let dlog = ends[i].1.sub(&ends[j].1)?;
            for r in 0..rows {
                total += row_norm(&dh, r) + row_norm(&dlog, r);
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Mean per-sample logit change when a continuous model is integrated with
/// `factor ×` its configured step count.
pub fn refinement_gap(m: &FieldModel, x: &Tensor, factor: usize) -> Result<f64> {
    let spec = m
        .config()
        .solver
        .filter(|_| m.family() == Family::Continuous)
        .ok_or_else(|| invalid("refinement gap needs a continuous model"))?;
    if factor == 0 {
        return Err(invalid("refinement factor must be >= 1"));
    }
    let base = m.logits(x)?;
    let fine = m
        .with_solver(spec.with_steps(factor * spec.steps))?
        .logits(x)?;
    let d = fine.sub(&base)?;
    Ok((0..x.rows()).map(|r| row_norm(&d, r)).sum::<f64>() / x.rows() as f64)
}

pub(crate) fn row_norm(t: &Tensor, r: usize) -> f64 {
    t.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn row_norm_sq(t: &Tensor, r: usize) -> f64 {
    t.row_slice(r).iter().map(|v| v * v).sum::<f64>()
}
