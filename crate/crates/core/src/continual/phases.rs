use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{correlation_report, drift_diagnostics, hybrid_delta, write_drift_csv};
use super::metrics::{AccuracyMatrix, CorrelationReport, DriftRecord, HybridDelta};
use super::run::{metric_anchors, run_method, run_method_snapshots, MethodResult};
use super::{ContinualConfig, LayerGroup, Method, TaskSequence};
use crate::error::{FieldError, Result};
use crate::gradcore::Rng;
use crate::jsonio::write_json;

/// Finetune forgetting diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase0Output {
    pub accuracy: AccuracyMatrix,
    pub records: Vec<DriftRecord>,
    pub correlations: CorrelationReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase2Row {
    /// `traj_only`, `jac_only`, `full`, or `layers_<group>`.
    pub variant: String,
    pub result: MethodResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budget: usize,
    pub method: Method,
    pub aa: f64,
    pub bwt: Option<f64>,
    pub frs: f64,
    pub jrs: f64,
}

impl BudgetRow {
    pub fn from_result(r: &MethodResult) -> Self {
        BudgetRow {
            budget: r.budget,
            method: r.method,
            aa: r.aa,
            bwt: r.bwt,
            frs: r.frs,
            jrs: r.jrs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridRow {
    pub budget: usize,
    pub base: Method,
    pub hybrid: Method,
    pub delta: HybridDelta,
}

pub fn phase0(seq: &TaskSequence, cfg: &ContinualConfig) -> Result<Phase0Output> {
    let (result, snapshots) = run_method_snapshots(Method::Finetune, seq, cfg)?;
    let rng = Rng::new(cfg.seed);
    let anchors = metric_anchors(seq, cfg, &rng)?;
    let records = drift_diagnostics(&snapshots, &anchors, &result.accuracy, cfg.jrs_probes, &rng)?;
    let correlations = correlation_report(&records)?;
    Ok(Phase0Output {
        accuracy: result.accuracy,
        records,
        correlations,
    })
}

pub fn phase1(seq: &TaskSequence, cfg: &ContinualConfig) -> Result<Vec<MethodResult>> {
    Method::STANDALONE
        .iter()
        .map(|&m| run_method(m, seq, cfg))
        .collect()
}

/// Component ablation, then full FPR restricted to each layer group.
pub fn phase2(seq: &TaskSequence, cfg: &ContinualConfig) -> Result<Vec<Phase2Row>> {
    let mut rows = Vec::new();
    for (variant, m) in [
        ("traj_only", Method::FprTraj),
        ("jac_only", Method::FprJac),
        ("full", Method::FprFull),
    ] {
        rows.push(Phase2Row {
            variant: variant.into(),
            result: run_method(m, seq, cfg)?,
        });
    }
    for group in [
        LayerGroup::Early,
        LayerGroup::Mid,
        LayerGroup::Late,
        LayerGroup::All,
    ] {
        let c = ContinualConfig {
            fpr_layers: group,
            ..cfg.clone()
        };
        rows.push(Phase2Row {
            variant: format!("layers_{}", group.name()),
            result: run_method(Method::FprFull, seq, &c)?,
        });
    }
    Ok(rows)
}

pub const BUDGET_METHODS: [Method; 4] =
    [Method::Finetune, Method::Er, Method::Derpp, Method::FprFull];

pub fn phase3(
    seq: &TaskSequence,
    cfg: &ContinualConfig,
    budgets: &[usize],
) -> Result<Vec<BudgetRow>> {
    let mut rows = Vec::new();
    for &budget in budgets {
        let c = ContinualConfig {
            budget,
            ..cfg.clone()
        };
        for m in BUDGET_METHODS {
            rows.push(BudgetRow::from_result(&run_method(m, seq, &c)?));
        }
    }
    Ok(rows)
}

/// Hybrids next to their bases and the standalone references, with
/// per-budget deltas of each hybrid over its base.
pub fn phase4(
    seq: &TaskSequence,
    cfg: &ContinualConfig,
    budgets: &[usize],
) -> Result<(Vec<MethodResult>, Vec<HybridRow>)> {
    let mut results = Vec::new();
    let mut deltas = Vec::new();
    for &budget in budgets {
        let c = ContinualConfig {
            budget,
            ..cfg.clone()
        };
        for m in [Method::Finetune, Method::FprFull] {
            results.push(run_method(m, seq, &c)?);
        }
        for hybrid in [Method::ErFprLate, Method::DerppFprFull] {
            let base = hybrid.base().expect("hybrid has a base");
            let b = run_method(base, seq, &c)?;
            let h = run_method(hybrid, seq, &c)?;
            deltas.push(HybridRow {
                budget,
                base,
                hybrid,
                delta: hybrid_delta(&b, &h),
            });
            results.push(b);
            results.push(h);
        }
    }
    Ok((results, deltas))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutputs {
    pub phase0: Option<Phase0Output>,
    pub phase1: Option<Vec<MethodResult>>,
    pub phase2: Option<Vec<Phase2Row>>,
    pub phase3: Option<Vec<BudgetRow>>,
    pub phase4: Option<Vec<MethodResult>>,
    pub hybrid_deltas: Option<Vec<HybridRow>>,
}

impl PhaseOutputs {
    /// Runs the listed phases (0..=4) on one task sequence.
    pub fn run(cfg: &ContinualConfig, phases: &[usize], budgets: &[usize]) -> Result<Self> {
        if let Some(p) = phases.iter().find(|&&p| p > 4) {
            return Err(FieldError::Config(format!("unknown continual phase {p}")));
        }
        if budgets.is_empty() && phases.iter().any(|&p| p >= 3) {
            return Err(FieldError::Config(
                "phases 3 and 4 need at least one budget".into(),
            ));
        }
        let seq = TaskSequence::build(cfg, &Rng::new(cfg.seed))?;
        let mut out = PhaseOutputs::default();
        if phases.contains(&0) {
            out.phase0 = Some(phase0(&seq, cfg)?);
        }
        if phases.contains(&1) {
            out.phase1 = Some(phase1(&seq, cfg)?);
        }
        if phases.contains(&2) {
            out.phase2 = Some(phase2(&seq, cfg)?);
        }
        if phases.contains(&3) {
            out.phase3 = Some(phase3(&seq, cfg, budgets)?);
        }
        if phases.contains(&4) {
            let (results, deltas) = phase4(&seq, cfg, budgets)?;
            out.phase4 = Some(results);
            out.hybrid_deltas = Some(deltas);
        }
        Ok(out)
    }

    /// Writes `results.json` (every phase that ran) plus
    /// `accuracy_matrix.json`, `drift_records.csv`, `correlation_report.json`
    /// and `budget_results.json` when their phases ran.
    pub fn write(&self, dir: &Path) -> Result<()> {
        if let Some(p0) = &self.phase0 {
            write_json(&dir.join("accuracy_matrix.json"), &p0.accuracy)?;
            write_drift_csv(&dir.join("drift_records.csv"), &p0.records)?;
            write_json(&dir.join("correlation_report.json"), &p0.correlations)?;
        }
        write_json(&dir.join("results.json"), self)?;
        if let Some(p3) = &self.phase3 {
            write_json(&dir.join("budget_results.json"), p3)?;
        }
        Ok(())
    }
}
