use serde::{Deserialize, Serialize};

use super::data::LabeledSet;
use crate::error::{invalid, Result};
use crate::gradcore::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodKind {
    Noise,
    Rotation,
    CenterShift,
    CurvatureChange,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSpec {
    pub kind: OodKind,
    pub magnitude: f64,
}

/// Applies a distribution shift to the inputs; labels are untouched.
///
/// - noise: additive Gaussian with std `magnitude`
/// - rotation: Givens rotations by angle `magnitude` on a seeded pairing of
///   the coordinates (norm preserving)
/// - center-shift: each class moves by `magnitude` along its own random unit
///   direction
/// - curvature-change: adds `magnitude` to the curvature gain
pub fn apply_ood(data: &LabeledSet, ood: &OodSpec, rng: &Rng) -> Result<LabeledSet> {
    if !(ood.magnitude.is_finite() && ood.magnitude > 0.0) {
        return Err(invalid(format!(
            "shift magnitude must be > 0, got {}",
            ood.magnitude
        )));
    }
    let mut out = data.clone();
    let d = data.dim();
    let m = ood.magnitude;
    match ood.kind {
        OodKind::Noise => {
            let mut r = rng.stream("ood-noise");
            for v in out.x.data_mut() {
                *v += m * r.normal();
            }
        }
        OodKind::Rotation => {
            let order = rng.stream("ood-rotation").permutation(d);
            let (s, c) = m.sin_cos();
            for row in 0..data.len() {
                for pair in order.chunks_exact(2) {
                    let (i, j) = (pair[0], pair[1]);
                    let (a, b) = (out.x.get(row, i), out.x.get(row, j));
                    out.x.set(row, i, c * a - s * b);
                    out.x.set(row, j, s * a + c * b);
                }
            }
        }
        OodKind::CenterShift => {
            let dirs: Vec<Vec<f64>> = (0..data.classes)
                .map(|k| {
                    let mut r = rng.substream("ood-shift", k as u64);
                    let v: Vec<f64> = (0..d).map(|_| r.normal()).collect();
                    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    v.into_iter().map(|a| a / n).collect()
                })
                .collect();
            for (row, &y) in data.labels.iter().enumerate() {
                for j in 0..d {
                    out.x.set(row, j, out.x.get(row, j) + m * dirs[y][j]);
                }
            }
        }
        OodKind::CurvatureChange => {
            let curve = data
                .curve
                .as_ref()
                .ok_or_else(|| invalid("curvature shift needs generator curvature terms"))?;
            out.x = out.x.add(&curve.scale(m))?;
        }
    }
    Ok(out)
}
