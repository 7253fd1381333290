//! Fixed-step integrators and reparameterization checks.
//!
//! The stepping code is generic over [`Ops`], so the same arithmetic runs
//! plainly, on a tape (gradients through unrolled steps) or in forward mode.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fieldmetrics::Trajectory;
use crate::gradcore::{Eval, Ops, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Midpoint,
    Rk4,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Euler => 1,
            Method::Midpoint => 2,
            Method::Rk4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Midpoint => "midpoint",
            Method::Rk4 => "rk4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub method: Method,
    pub steps: usize,
    pub t0: f64,
    pub t1: f64,
}

impl SolverSpec {
    pub fn new(method: Method, steps: usize, t0: f64, t1: f64) -> Result<Self> {
        let spec = SolverSpec {
            method,
            steps,
            t0,
            t1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("solver steps must be >= 1"));
        }
        if !(self.t0.is_finite() && self.t1.is_finite()) || self.t1 <= self.t0 {
            return Err(invalid(format!(
                "solver interval must satisfy t1 > t0, got [{}, {}]",
                self.t0, self.t1
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn with_steps(&self, steps: usize) -> SolverSpec {
        SolverSpec { steps, ..*self }
    }

    pub fn with_method(&self, method: Method) -> SolverSpec {
        SolverSpec { method, ..*self }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.method.name(), self.steps)
    }
}

/// One step of `method` from `(h, t)` with size `dt`.
pub fn solver_step<O, F>(
    ops: &O,
    field: &F,
    method: Method,
    h: &O::V,
    t: f64,
    dt: f64,
) -> Result<O::V>
where
    O: Ops,
    F: Fn(&O::V, f64) -> Result<O::V>,
{
    match method {
        Method::Euler => {
            let k1 = field(h, t)?;
            ops.add(h, &ops.scale(&k1, dt)?)
        }
        Method::Midpoint => {
            let k1 = field(h, t)?;
            let mid = ops.add(h, &ops.scale(&k1, 0.5 * dt)?)?;
            let k2 = field(&mid, t + 0.5 * dt)?;
            ops.add(h, &ops.scale(&k2, dt)?)
        }
        Method::Rk4 => {
            let k1 = field(h, t)?;
            let k2 = field(&ops.add(h, &ops.scale(&k1, 0.5 * dt)?)?, t + 0.5 * dt)?;
            let k3 = field(&ops.add(h, &ops.scale(&k2, 0.5 * dt)?)?, t + 0.5 * dt)?;
            let k4 = field(&ops.add(h, &ops.scale(&k3, dt)?)?, t + dt)?;
            let mut acc = ops.add(&k1, &ops.scale(&k2, 2.0)?)?;
            acc = ops.add(&acc, &ops.scale(&k3, 2.0)?)?;
            acc = ops.add(&acc, &k4)?;
            ops.add(h, &ops.scale(&acc, dt / 6.0)?)
        }
    }
}

/// All `steps + 1` states of a fixed-step integration, in any evaluation mode.
pub fn integrate_with<O, F>(ops: &O, field: &F, h0: &O::V, spec: &SolverSpec) -> Result<Vec<O::V>>
where
    O: Ops,
    F: Fn(&O::V, f64) -> Result<O::V>,
{
    spec.validate()?;
    let dt = spec.dt();
    let mut states = Vec::with_capacity(spec.steps + 1);
    states.push(h0.clone());
    for k in 0..spec.steps {
        let next = solver_step(ops, field, spec.method, &states[k], spec.time(k), dt)?;
        states.push(next);
    }
    Ok(states)
}

/// Integrates a plain vector field `dh/dt = f(h, t)`.
pub fn integrate<F>(field: F, h0: &Tensor, spec: &SolverSpec) -> Result<Trajectory>
where
    F: Fn(&Tensor, f64) -> Result<Tensor>,
{
    let checked = |h: &Tensor, t: f64| -> Result<Tensor> {
        let dh = field(h, t)?;
        if dh.shape() != h.shape() {
            return Err(crate::error::shape_err(
                "integrate",
                format!("field returned {:?} for state {:?}", dh.shape(), h.shape()),
            ));
        }
        dh.ensure_finite("field")
    };
    let states = integrate_with(&Eval, &checked, h0, spec)?;
    Trajectory::with_times(states, spec.times())
}

/// Endpoint only.
pub fn endpoint<F>(field: F, h0: &Tensor, spec: &SolverSpec) -> Result<Tensor>
where
    F: Fn(&Tensor, f64) -> Result<Tensor>,
{
    Ok(integrate(field, h0, spec)?.last().clone())
}

/// `‖endpoint(spec) − endpoint(spec with twice the steps)‖₂`.
pub fn regrid_error<F>(field: F, h0: &Tensor, spec: &SolverSpec) -> Result<f64>
where
    F: Fn(&Tensor, f64) -> Result<Tensor>,
{
    let coarse = endpoint(&field, h0, spec)?;
    let fine = endpoint(&field, h0, &spec.with_steps(spec.steps * 2))?;
    Ok(coarse.sub(&fine)?.norm())
}

/// Distance between integrating `t0 → t1` directly and composing
/// `t0 → s` with `s → t1`, where `s = t0 + split·(t1 − t0)`.
///
/// The two legs share the total step count: the first gets
/// `round(split·steps)` (at least one), the second the remainder.
pub fn semigroup_error<F>(field: F, h0: &Tensor, split: f64, spec: &SolverSpec) -> Result<f64>
where
    F: Fn(&Tensor, f64) -> Result<Tensor>,
{
    if !(split > 0.0 && split < 1.0) {
        return Err(invalid(format!("split must lie in (0,1), got {split}")));
    }
    if spec.steps < 2 {
        return Err(invalid("semigroup check needs at least 2 steps"));
    }
    let n1 = ((split * spec.steps as f64).round() as usize).clamp(1, spec.steps - 1);
    let n2 = spec.steps - n1;
    let mid = spec.t0 + split * (spec.t1 - spec.t0);
    let direct = endpoint(&field, h0, spec)?;
    let first = endpoint(&field, h0, &SolverSpec::new(spec.method, n1, spec.t0, mid)?)?;
    let composed = endpoint(
        &field,
        &first,
        &SolverSpec::new(spec.method, n2, mid, spec.t1)?,
    )?;
    Ok(direct.sub(&composed)?.norm())
}
