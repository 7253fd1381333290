use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::MethodResult;
use crate::error::{invalid, FieldError, Result};
use crate::fieldmetrics::{correlations, frs, jrs, Correlation};
use crate::gradcore::{Rng, Tensor};
use crate::netzoo::FieldModel;

/// `matrix[t][j]`: accuracy on task `j ≤ t` after training task `t`;
/// `pre_training[j]`: accuracy on task `j` right before training it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub matrix: Vec<Vec<f64>>,
    pub pre_training: Vec<f64>,
}

impl AccuracyMatrix {
    pub fn tasks(&self) -> usize {
        self.matrix.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (t, row) in self.matrix.iter().enumerate() {
            if row.len() != t + 1 {
                return Err(invalid(format!(
                    "row {t} has {} entries, expected {}",
                    row.len(),
                    t + 1
                )));
            }
        }
        let all = self.matrix.iter().flatten().chain(&self.pre_training);
        if all.into_iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(invalid("accuracies must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMetrics {
    pub aa: f64,
    /// Absent for a single task.
    pub bwt: Option<f64>,
    /// Absent without pre-training accuracies beyond the first task.
    pub fwt: Option<f64>,
}

/// AA = mean of the final row; BWT = mean over `j < T` of
/// `R[T][j] − R[j][j]`; FWT = mean over `j ≥ 1` of
/// `pre_training[j] − random_baseline[j]`.
pub fn metrics_aa_bwt_fwt(r: &AccuracyMatrix, random_baseline: &[f64]) -> Result<TransferMetrics> {
    r.validate()?;
    let t = r.tasks();
    if t == 0 {
        return Err(invalid("empty accuracy matrix"));
    }
    let last = &r.matrix[t - 1];
    let aa = last.iter().sum::<f64>() / t as f64;
    let bwt =
        (t > 1).then(|| (0..t - 1).map(|j| last[j] - r.matrix[j][j]).sum::<f64>() / (t - 1) as f64);
    let transfer: Vec<f64> = (1..r.pre_training.len().min(t))
        .map(|j| {
            random_baseline
                .get(j)
                .map(|b| r.pre_training[j] - b)
                .ok_or_else(|| invalid(format!("no random baseline for task {j}")))
        })
        .collect::<Result<_>>()?;
    let fwt = (!transfer.is_empty()).then(|| transfer.iter().sum::<f64>() / transfer.len() as f64);
    Ok(TransferMetrics { aa, bwt, fwt })
}

/// Drift of one old task between the snapshot after it and a later one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub old_task: usize,
    pub later_task: usize,
    pub param_drift: f64,
    pub traj_drift: f64,
    pub jac_drift: f64,
    pub acc_drop: f64,
}

/// One record per `(old, later)` pair with `old < later`. `snapshots[t]`
/// is the model after task `t`, `anchors[k]` task `k`'s anchor inputs.
pub fn drift_diagnostics(
    snapshots: &[FieldModel],
    anchors: &[Tensor],
    acc: &AccuracyMatrix,
    probes: usize,
    rng: &Rng,
) -> Result<Vec<DriftRecord>> {
    if snapshots.len() != acc.tasks() || anchors.len() < snapshots.len() {
        return Err(invalid(
            "need one snapshot, anchor set and matrix row per task",
        ));
    }
    let mut out = Vec::new();
    for (k, old) in snapshots.iter().enumerate() {
        for (t, new) in snapshots.iter().enumerate().skip(k + 1) {
            let theta_gap: f64 = old
                .theta()
                .iter()
                .zip(new.theta())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let mut r = rng
                .stream("jrs")
                .substream("pair", (k * snapshots.len() + t) as u64);
            out.push(DriftRecord {
                old_task: k,
                later_task: t,
                param_drift: theta_gap,
                traj_drift: frs(old, new, &anchors[k])?,
                jac_drift: jrs(old, new, &anchors[k], probes, &mut r)?,
                acc_drop: acc.matrix[k][k] - acc.matrix[t][k],
            });
        }
    }
    Ok(out)
}

/// Correlation of each drift kind with the accuracy drop; a kind is absent
/// when either series is constant or there are fewer than 3 records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub records: usize,
    pub param_drift: Option<Correlation>,
    pub traj_drift: Option<Correlation>,
    pub jac_drift: Option<Correlation>,
}

pub fn correlation_report(records: &[DriftRecord]) -> Result<CorrelationReport> {
    let drop: Vec<f64> = records.iter().map(|r| r.acc_drop).collect();
    let corr = |f: fn(&DriftRecord) -> f64| -> Result<Option<Correlation>> {
        let xs: Vec<f64> = records.iter().map(f).collect();
        match correlations(&xs, &drop) {
            Ok(c) => Ok(Some(c)),
            Err(FieldError::InvalidArgument(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok(CorrelationReport {
        records: records.len(),
        param_drift: corr(|r| r.param_drift)?,
        traj_drift: corr(|r| r.traj_drift)?,
        jac_drift: corr(|r| r.jac_drift)?,
    })
}

pub fn write_drift_csv(path: &Path, records: &[DriftRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| FieldError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Signed improvements `hybrid − base`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridDelta {
    pub delta_aa: f64,
    pub delta_bwt: Option<f64>,
    pub delta_frs: f64,
    pub delta_jrs: f64,
}

pub fn hybrid_delta(base: &MethodResult, hybrid: &MethodResult) -> HybridDelta {
    HybridDelta {
        delta_aa: hybrid.aa - base.aa,
        delta_bwt: hybrid.bwt.zip(base.bwt).map(|(h, b)| h - b),
        delta_frs: hybrid.frs - base.frs,
        delta_jrs: hybrid.jrs - base.jrs,
    }
}
