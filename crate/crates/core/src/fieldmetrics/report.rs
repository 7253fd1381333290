use serde::{Deserialize, Serialize};

use super::geometry::{curvature, norm_path, path_length, velocity_alignment, EPS};
use super::Trajectory;
use crate::error::Result;

/// Propagation metrics for a model/dataset pair. Entries that do not apply
/// (or were not computed) are `None` and serialize as `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldReport {
    pub len: Option<f64>,
    pub norm_path: Option<f64>,
    pub curvature: Option<f64>,
    pub vel_align: Option<f64>,
    pub path_sens_hidden: Option<f64>,
    pub path_sens_logit: Option<f64>,
    pub solver_err: Option<f64>,
    /// Mean W₁ distance between spectra of adjacent layers.
    pub jac_wdist: Option<f64>,
    /// Mean W₁ distance between model and reference (teacher) spectra.
    pub jac_wdist_teacher: Option<f64>,
    pub spectral_entropy: Option<Vec<f64>>,
    pub frs: Option<f64>,
    pub jrs: Option<f64>,
}

impl FieldReport {
    /// Geometry entries from a (possibly batched) trajectory. Curvature and
    /// alignment stay `None` for two-state trajectories.
    pub fn from_trajectory(t: &Trajectory) -> FieldReport {
        FieldReport {
            len: Some(path_length(t)),
            norm_path: Some(norm_path(t, EPS)),
            curvature: curvature(t, EPS).ok(),
            vel_align: velocity_alignment(t, EPS).ok(),
            ..FieldReport::default()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
