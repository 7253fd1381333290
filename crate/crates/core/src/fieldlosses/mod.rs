//! Field-aware training objectives and collapse diagnostics.
//!
//! Every loss is written against [`Ops`]: evaluate it with
//! [`Eval`](crate::gradcore::Eval) or record it on a
//! [`Tape`](crate::gradcore::Tape) to get ∇θ. Jacobian terms use
//! reverse-over-forward through `Dual<&Tape>`.

mod collapse;
mod losses;
mod reveal;

pub use collapse::{
    collapse_check, collapse_flags, rep_variance, CollapseFlags, CollapseThresholds,
};
pub use losses::*;
pub use reveal::{
    evaluate_reveal, run_reveal, RevealConfig, RevealData, RevealMetrics, RevealOutcome,
    RevealVariant,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Non-negative weights of the field-aware terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Reveal-path consistency.
    pub lambda_r: f64,
    /// Solver consistency.
    pub lambda_s: f64,
    /// Adjacent-layer Jacobian smoothness.
    pub lambda_j: f64,
    /// Teacher trajectory.
    pub alpha: f64,
    /// Teacher derivative.
    pub beta: f64,
    /// Solver consistency in teacher-flow training.
    pub gamma: f64,
    /// Field-preservation regularizer.
    pub lambda_fpr: f64,
    /// Hidden-state term inside the field-preservation regularizer.
    pub lambda_h: f64,
    /// Jacobian term inside the field-preservation regularizer.
    pub lambda_j_fpr: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_r,
            self.lambda_s,
            self.lambda_j,
            self.alpha,
            self.beta,
            self.gamma,
            self.lambda_fpr,
            self.lambda_h,
            self.lambda_j_fpr,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("loss weights must be finite and >= 0"));
        }
        Ok(())
    }
}
