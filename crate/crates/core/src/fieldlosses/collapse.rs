use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gradcore::Tensor;
use crate::netzoo::FieldModel;

/// Collapse thresholds: `tau_v` on representation variance, `tau_c` on the
/// largest predicted-class share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseThresholds {
    pub tau_v: f64,
    pub tau_c: f64,
}

impl CollapseThresholds {
    pub const VARIANCE_FRACTION: f64 = 1e-4;
    pub const CLASS_SHARE: f64 = 0.9;

    /// `tau_v = 1e-4 × variance of h_L at initialization`, `tau_c = 0.9`.
    pub fn from_init(init: &FieldModel, x: &Tensor) -> Result<Self> {
        let h = init.forward(x)?.hidden.pop().expect("states");
        Ok(CollapseThresholds {
            tau_v: Self::VARIANCE_FRACTION * rep_variance(&h)?,
            tau_c: Self::CLASS_SHARE,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseFlags {
    pub rep_variance: f64,
    pub prediction_entropy: f64,
    pub class_balance: f64,
    pub collapsed: bool,
}

/// Mean over dimensions of the across-row variance.
pub fn rep_variance(h: &Tensor) -> Result<f64> {
    let (n, d) = (h.rows(), h.cols());
    if n == 0 {
        return Err(invalid("variance of an empty batch"));
    }
    let mut total = 0.0;
    for c in 0..d {
        let mean = (0..n).map(|r| h.get(r, c)).sum::<f64>() / n as f64;
        total += (0..n).map(|r| (h.get(r, c) - mean).powi(2)).sum::<f64>() / n as f64;
    }
    Ok(total / d as f64)
}

/// Flags from terminal representations and logits of an evaluation batch.
pub fn collapse_flags(
    h_last: &Tensor,
    logits: &Tensor,
    th: &CollapseThresholds,
) -> Result<CollapseFlags> {
    let n = logits.rows();
    if n == 0 {
        return Err(invalid("collapse check needs samples"));
    }
    let classes = logits.cols();
    let probs = logits.softmax()?;
    let mut mean_p = vec![0.0; classes];
    for r in 0..n {
        for (c, v) in probs.row_slice(r).iter().enumerate() {
            mean_p[c] += v / n as f64;
        }
    }
    let entropy = -mean_p
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let mut counts = vec![0usize; classes];
    for c in logits.argmax_rows() {
        counts[c] += 1;
    }
    let share = *counts.iter().max().expect("classes >= 1") as f64 / n as f64;
    let var = rep_variance(h_last)?;
    Ok(CollapseFlags {
        rep_variance: var,
        prediction_entropy: entropy,
        class_balance: share,
        collapsed: var < th.tau_v || share > th.tau_c,
    })
}

pub fn collapse_check(
    m: &FieldModel,
    x: &Tensor,
    th: &CollapseThresholds,
) -> Result<CollapseFlags> {
    let mut pass = m.forward(x)?;
    let h = pass.hidden.pop().expect("states");
    collapse_flags(&h, &pass.logits, th)
}
