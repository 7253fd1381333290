use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{Algorithm, TrainOutcome};
use crate::error::{FieldError, Result};

/// One algorithm's operating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoRow {
    pub algorithm: String,
    pub test_acc: Option<f64>,
    pub traj_rmse: Option<f64>,
    pub deriv_rmse: Option<f64>,
    pub cos_mean: Option<f64>,
    pub cos_min: Option<f64>,
    pub neg_frac: Option<f64>,
    pub seconds: f64,
}

impl ParetoRow {
    pub fn from_outcome(algorithm: Algorithm, out: &TrainOutcome) -> Self {
        ParetoRow {
            algorithm: algorithm.name().to_string(),
            test_acc: out.final_metrics.accuracy,
            traj_rmse: out.final_metrics.traj_rmse,
            deriv_rmse: out.final_metrics.deriv_rmse,
            cos_mean: out.conflicts.mean(),
            cos_min: out.conflicts.min(),
            neg_frac: out.conflicts.negative_fraction(),
            seconds: out.seconds,
        }
    }
}

pub fn write_pareto_csv(path: &Path, rows: &[ParetoRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| FieldError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_pareto_csv(path: &Path) -> Result<Vec<ParetoRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(FieldError::from))
        .collect()
}
