use super::geometry::EPS;
use super::sensitivity::row_norm_sq;
use crate::error::{invalid, shape_err, Result};
use crate::gradcore::{Rng, Tensor};
use crate::netzoo::FieldModel;

fn check_pair(old: &FieldModel, new: &FieldModel, anchors: &Tensor) -> Result<()> {
    if anchors.rows() == 0 {
        return Err(invalid("no anchors"));
    }
    if old.widths() != new.widths() {
        return Err(shape_err("retention", "models have different layer widths"));
    }
    Ok(())
}

/// Trajectory retention: mean over anchors of `(1/(L+1)) Σ_ℓ ‖h_ℓ^old − h_ℓ^new‖²`.
pub fn frs(old: &FieldModel, new: &FieldModel, anchors: &Tensor) -> Result<f64> {
    check_pair(old, new, anchors)?;
    let a = old.forward(anchors)?.hidden;
    let b = new.forward(anchors)?.hidden;
    let layers = a.len() as f64;
    let mut total = 0.0;
    for (ha, hb) in a.iter().zip(&b) {
        total += ha.sub(hb)?.norm_sq();
    }
    Ok(total / layers / anchors.rows() as f64)
}

/// Jacobian retention: mean over anchors, layers and Rademacher probes of
/// `‖J_ℓ^old δ − J_ℓ^new δ‖² / (‖δ‖² + ε)`, each Jacobian taken at its own
/// model's `h_ℓ(x)`.
pub fn jrs(
    old: &FieldModel,
    new: &FieldModel,
    anchors: &Tensor,
    probes: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if probes == 0 {
        return Err(invalid("jrs needs at least one probe"));
    }
    check_pair(old, new, anchors)?;
    let probe_sets: Vec<Vec<Tensor>> = old
        .widths()
        .iter()
        .take(old.num_layers())
        .map(|&w| {
            (0..probes)
                .map(|_| rng.rademacher_tensor(&[anchors.rows(), w]))
                .collect()
        })
        .collect();
    jrs_with_probes(old, new, anchors, &probe_sets)
}

/// [`jrs`] with explicit probes: `probes[ℓ][k]` is a `[anchors, width_ℓ]` batch.
pub fn jrs_with_probes(
    old: &FieldModel,
    new: &FieldModel,
    anchors: &Tensor,
    probes: &[Vec<Tensor>],
) -> Result<f64> {
    check_pair(old, new, anchors)?;
    if probes.len() != old.num_layers() || probes.iter().any(|p| p.is_empty()) {
        return Err(invalid("need a non-empty probe set for every layer"));
    }
    let ha = old.forward(anchors)?.hidden;
    let hb = new.forward(anchors)?.hidden;
    let mut total = 0.0;
    let mut count = 0usize;
    for (l, set) in probes.iter().enumerate() {
        for delta in set {
            let ja = old.layer_jvp_at(anchors, &ha[l], l, delta)?;
            let jb = new.layer_jvp_at(anchors, &hb[l], l, delta)?;
            let d = ja.sub(&jb)?;
            for r in 0..anchors.rows() {
                total += row_norm_sq(&d, r) / (row_norm_sq(delta, r) + EPS);
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// The two components of the propagation-field distance between models,
/// reported separately: standardized-trajectory gap and Jacobian gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldDistance {
    pub traj: f64,
    pub jac: f64,
}

pub fn field_distance(
    a: &FieldModel,
    b: &FieldModel,
    x: &Tensor,
    probes: usize,
    rng: &mut Rng,
) -> Result<FieldDistance> {
    check_pair(a, b, x)?;
    let (ta, _) = a.forward_with_trajectory(x)?;
    let (tb, _) = b.forward_with_trajectory(x)?;
    let mut traj = 0.0;
    for (za, zb) in ta.states().iter().zip(tb.states()) {
        traj += za.sub(zb)?.norm_sq();
    }
    traj /= ta.len() as f64 * x.rows() as f64;
    Ok(FieldDistance {
        traj,
        jac: jrs(a, b, x, probes, rng)?,
    })
}
