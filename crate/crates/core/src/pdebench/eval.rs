use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::dataset::PdeDataset;
use super::models::{ModelClass, PdeModel};
use super::{reference_rhs, reference_solve, PdeFamily, PdeSpec};
use crate::error::{invalid, FieldError, Result};
use crate::fieldmetrics::pearson;
use crate::gradcore::{Rng, Tensor};
use crate::odesolve::{endpoint, semigroup_error, Method, SolverSpec};

/// Anything that maps initial states to states at later times.
pub trait Propagator {
    fn name(&self) -> String;
    /// States at ascending `horizons` from `u0` at time 0.
    fn propagate(&self, u0: &Tensor, horizons: &[f64]) -> Result<Vec<Tensor>>;
    /// Native step when the propagator integrates a right-hand side.
    fn step(&self) -> Option<f64>;
    /// Right-hand side for integrating propagators.
    fn rhs(&self, u: &Tensor, t: f64) -> Result<Tensor>;
    /// Whether predictions depend on the requested horizon.
    fn time_aware(&self) -> bool {
        true
    }
}

impl Propagator for PdeModel {
    fn name(&self) -> String {
        self.class.name().to_string()
    }

    fn propagate(&self, u0: &Tensor, horizons: &[f64]) -> Result<Vec<Tensor>> {
        self.predict(u0, horizons)
    }

    fn step(&self) -> Option<f64> {
        self.class.integrates().then_some(self.dt)
    }

    fn rhs(&self, u: &Tensor, _t: f64) -> Result<Tensor> {
        PdeModel::rhs(self, u)
    }

    fn time_aware(&self) -> bool {
        self.class != ModelClass::M1
    }
}

/// The reference solver viewed as a model.
#[derive(Clone, Debug)]
pub struct ReferenceModel {
    pub spec: PdeSpec,
}

impl Propagator for ReferenceModel {
    fn name(&self) -> String {
        "reference".into()
    }

    fn propagate(&self, u0: &Tensor, horizons: &[f64]) -> Result<Vec<Tensor>> {
        reference_solve(&self.spec, u0, horizons)
    }

    fn step(&self) -> Option<f64> {
        Some(self.spec.reference_dt)
    }

    fn rhs(&self, u: &Tensor, t: f64) -> Result<Tensor> {
        reference_rhs(u, t, &self.spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeMetrics {
    /// MSE at the training horizon.
    pub endpoint_mse: f64,
    /// `(horizon, MSE)` over the evaluation horizons.
    pub horizon_mse: Vec<(f64, f64)>,
    /// MSE at the largest evaluation horizon.
    pub final_mse: f64,
    /// Mean squared gap between step `dt` and `dt/2` at the largest horizon.
    pub regrid: Option<f64>,
    /// Mean squared gap between direct and split integration over the
    /// training horizon, split off the step grid.
    pub semigroup: Option<f64>,
    /// Per-sample Pearson r of model vs reference energy series, averaged.
    pub energy_r: Option<f64>,
    pub perturb_mse: f64,
}

fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    Ok(a.sub(b)?.norm_sq() / a.data().len() as f64)
}

fn energies(u: &Tensor) -> Vec<f64> {
    (0..u.rows())
        .map(|r| {
            let row = u.row_slice(r);
            row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64
        })
        .collect()
}

/// Fraction of the split point used by the semigroup check.
pub const SEMIGROUP_SPLIT: f64 = 0.37;

/// Full metric suite of `model` on `data`. The perturbation is Gaussian
/// with standard deviation `perturb` per grid value.
pub fn evaluate_pde(
    model: &dyn Propagator,
    data: &PdeDataset,
    perturb: f64,
    rng: &Rng,
) -> Result<PdeMetrics> {
    let spec = &data.spec;
    let idx = data.all();
    let u0 = data.initial(&idx)?;
    let cells = (data.len() * spec.grid) as f64;

    let mut horizons = spec.eval_horizons.clone();
    horizons.push(spec.train_horizon);
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    let preds = model.propagate(&u0, &horizons)?;
    let mut horizon_mse = Vec::new();
    let mut endpoint_mse = f64::NAN;
    for (pred, &h) in preds.iter().zip(&horizons) {
        let e = mse(pred, &data.at(h, &idx)?)?;
        if h == spec.train_horizon {
            endpoint_mse = e;
        }
        if spec.eval_horizons.contains(&h) {
            horizon_mse.push((h, e));
        }
    }
    let final_mse = horizon_mse
        .last()
        .map(|p| p.1)
        .ok_or_else(|| invalid("no evaluation horizons"))?;

    let (regrid, semigroup) = match model.step() {
        Some(dt) => {
            let t_end = horizons[horizons.len() - 1];
            let steps = (t_end / dt).round() as usize;
            let field = |u: &Tensor, t: f64| model.rhs(u, t);
            let coarse = endpoint(
                field,
                &u0,
                &SolverSpec::new(Method::Rk4, steps, 0.0, t_end)?,
            )?;
            let fine = endpoint(
                field,
                &u0,
                &SolverSpec::new(Method::Rk4, 2 * steps, 0.0, t_end)?,
            )?;
            let regrid = coarse.sub(&fine)?.norm_sq() / cells;
            let t = spec.train_horizon;
            let s = SolverSpec::new(Method::Rk4, (t / dt).round() as usize, 0.0, t)?;
            let gap = semigroup_error(field, &u0, SEMIGROUP_SPLIT, &s)?;
            (Some(regrid), Some(gap * gap / cells))
        }
        None => (None, None),
    };

    let energy_r = if model.time_aware() {
        let states = model.propagate(&u0, &data.times)?;
        let model_e: Vec<Vec<f64>> = states.iter().map(energies).collect();
        let mut sum = 0.0;
        let mut count = 0usize;
        for (s, sample) in data.samples.iter().enumerate() {
            let truth: Vec<f64> = sample
                .trajectory
                .iter()
                .map(|u| u.iter().map(|v| v * v).sum::<f64>() / u.len() as f64)
                .collect();
            let pred: Vec<f64> = model_e.iter().map(|e| e[s]).collect();
            match pearson(&pred, &truth) {
                Ok(r) => {
                    sum += r;
                    count += 1;
                }
                Err(FieldError::InvalidArgument(_)) => {}
                Err(e) => return Err(e),
            }
        }
        (count > 0).then(|| sum / count as f64)
    } else {
        None
    };

    let delta = rng.stream("perturb").normal_tensor(u0.shape(), perturb);
    let shifted = u0.add(&delta)?;
    let t = [spec.train_horizon];
    let model_gap = model.propagate(&shifted, &t)?[0].sub(&model.propagate(&u0, &t)?[0])?;
    let ref_gap =
        reference_solve(spec, &shifted, &t)?[0].sub(&reference_solve(spec, &u0, &t)?[0])?;
    let perturb_mse = mse(&model_gap, &ref_gap)?;

    Ok(PdeMetrics {
        endpoint_mse,
        horizon_mse,
        final_mse,
        regrid,
        semigroup,
        energy_r,
        perturb_mse,
    })
}

/// One results-table row; absent metrics are written as "—".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeRow {
    pub family: PdeFamily,
    pub model: String,
    #[serde(rename = "EndpointMSE")]
    pub endpoint_mse: f64,
    #[serde(rename = "T2.0MSE")]
    pub final_mse: f64,
    #[serde(
        rename = "RegridDtHalf",
        serialize_with = "dash_out",
        deserialize_with = "dash_in"
    )]
    pub regrid: Option<f64>,
    #[serde(
        rename = "EnergyR",
        serialize_with = "dash_out",
        deserialize_with = "dash_in"
    )]
    pub energy_r: Option<f64>,
    #[serde(rename = "PerturbMSE")]
    pub perturb_mse: f64,
}

impl PdeRow {
    pub fn new(family: PdeFamily, model: &str, m: &PdeMetrics) -> Self {
        PdeRow {
            family,
            model: model.to_string(),
            endpoint_mse: m.endpoint_mse,
            final_mse: m.final_mse,
            regrid: m.regrid,
            energy_r: m.energy_r,
            perturb_mse: m.perturb_mse,
        }
    }
}

const DASH: &str = "—";

fn dash_out<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str(DASH),
    }
}

fn dash_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Cell {
        Num(f64),
        Text(String),
    }
    match Cell::deserialize(d)? {
        Cell::Num(x) => Ok(Some(x)),
        Cell::Text(s) if s == DASH => Ok(None),
        Cell::Text(s) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

pub fn write_pde_csv(path: &Path, rows: &[PdeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| FieldError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_pde_csv(path: &Path) -> Result<Vec<PdeRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(FieldError::from))
        .collect()
}
