//! Periodic 1-D PDE testbed: reference method-of-lines solvers, four model
//! classes that learn the propagation, and the metric suite comparing them.
//!
//! | class | what it learns |
//! |-------|----------------|
//! | M1 | `u0 ↦ u(T_train)` directly |
//! | M2 | `(u0, T) ↦ u(T)` |
//! | M3 | a 5-point stencil MLP right-hand side, integrated with RK4 |
//! | M4 | M3 with a fixed advection/diffusion/reaction form and learned coefficients |

mod dataset;
mod eval;
mod models;

pub use dataset::{generate_pde_dataset, negative_control, Control, PdeDataset, PdeSample};
pub use eval::{
    evaluate_pde, read_pde_csv, write_pde_csv, PdeMetrics, PdeRow, Propagator, ReferenceModel,
};
pub use models::{train_pde_model, ModelClass, PdeModel, PdeModelConfig, PdeObjective};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::gradcore::Tensor;
use crate::odesolve::{integrate, Method, SolverSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PdeFamily {
    /// Linear advection–diffusion.
    #[default]
    A,
    /// Burgers advection, diffusion and logistic reaction.
    B,
    /// Variable-coefficient, time-dependent advection–diffusion.
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSpec {
    pub family: PdeFamily,
    pub grid: usize,
    pub length: f64,
    /// Advection speed (base speed for family C).
    pub speed: f64,
    /// Diffusivity (base diffusivity for family C).
    pub diffusivity: f64,
    pub reaction: f64,
    pub train_horizon: f64,
    pub train_horizons: Vec<f64>,
    pub eval_horizons: Vec<f64>,
    pub reference_dt: f64,
    /// Spacing of the stored trajectory.
    pub record_dt: f64,
}

impl Default for PdeSpec {
    fn default() -> Self {
        PdeSpec::family(PdeFamily::A)
    }
}

impl PdeSpec {
    /// Defaults per family.
    pub fn family(family: PdeFamily) -> Self {
        let (speed, diffusivity, reaction) = match family {
            PdeFamily::A => (1.0, 0.05, 0.0),
            PdeFamily::B => (0.0, 0.05, 1.0),
            PdeFamily::C => (1.0, 0.05, 0.0),
        };
        PdeSpec {
            family,
            grid: 64,
            length: 2.0 * std::f64::consts::PI,
            speed,
            diffusivity,
            reaction,
            train_horizon: 1.0,
            train_horizons: vec![0.25, 0.5, 0.75, 1.0],
            eval_horizons: vec![0.5, 1.0, 1.5, 2.0],
            reference_dt: 0.005,
            record_dt: 0.05,
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.grid as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn max_horizon(&self) -> f64 {
        self.eval_horizons
            .iter()
            .chain(&self.train_horizons)
            .chain(std::iter::once(&self.train_horizon))
            .copied()
            .fold(0.0, f64::max)
    }

    /// Bound on the advection speed over the state range `[−umax, umax]`.
    fn max_speed(&self, umax: f64) -> f64 {
        match self.family {
            PdeFamily::A => self.speed.abs(),
            PdeFamily::B => umax,
            PdeFamily::C => self.speed.abs() * 1.5 * 1.3,
        }
    }

    fn max_diffusivity(&self) -> f64 {
        match self.family {
            PdeFamily::C => self.diffusivity * 1.3,
            _ => self.diffusivity,
        }
    }

    /// Checks `ν·dt/dx² ≤ 0.25` and `|c|·dt/dx ≤ 0.5`.
    pub fn check_cfl(&self, dt: f64, umax: f64) -> Result<()> {
        let dx = self.dx();
        let diff = self.max_diffusivity() * dt / (dx * dx);
        let adv = self.max_speed(umax) * dt / dx;
        if diff > 0.25 || adv > 0.5 {
            return Err(invalid(format!(
                "CFL violated: diffusion number {diff:.3} (max 0.25), Courant number {adv:.3} (max 0.5)"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 8 {
            return Err(invalid("grid needs at least 8 points"));
        }
        if !(self.length > 0.0 && self.reference_dt > 0.0 && self.record_dt > 0.0) {
            return Err(invalid("length and time steps must be > 0"));
        }
        let ratio = self.record_dt / self.reference_dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid("record_dt must be a multiple of reference_dt"));
        }
        for &h in self.eval_horizons.iter().chain(&self.train_horizons) {
            let k = h / self.record_dt;
            if h <= 0.0 || (k - k.round()).abs() > 1e-9 {
                return Err(invalid(format!("horizon {h} is not on the record grid")));
            }
        }
        if self.diffusivity < 0.0 {
            return Err(invalid("diffusivity must be >= 0"));
        }
        Ok(())
    }

    /// `c(x, t)` for family C.
    pub fn speed_at(&self, x: f64, t: f64) -> f64 {
        self.speed * (1.0 + 0.5 * t.sin()) * (1.0 + 0.3 * x.sin())
    }

    /// `ν(x)` for family C.
    pub fn diffusivity_at(&self, x: f64) -> f64 {
        self.diffusivity * (1.0 + 0.3 * x.cos())
    }
}

/// Method-of-lines right-hand side on `[rows, N]` states: upwind advection,
/// central diffusion, periodic boundaries.
pub fn reference_rhs(u: &Tensor, t: f64, spec: &PdeSpec) -> Result<Tensor> {
    let n = spec.grid;
    if u.shape().len() != 2 || u.cols() != n {
        return Err(shape_err(
            "reference_rhs",
            format!("state {:?}, grid {n}", u.shape()),
        ));
    }
    let dx = spec.dx();
    let mut out = Tensor::zeros(u.shape());
    for r in 0..u.rows() {
        let row = u.row_slice(r);
        for i in 0..n {
            let (l, c, rt) = (row[(i + n - 1) % n], row[i], row[(i + 1) % n]);
            let upwind = |v: f64| {
                if v >= 0.0 {
                    (c - l) / dx
                } else {
                    (rt - c) / dx
                }
            };
            let lap = (rt - 2.0 * c + l) / (dx * dx);
            let v = match spec.family {
                PdeFamily::A => -spec.speed * upwind(spec.speed) + spec.diffusivity * lap,
                PdeFamily::B => {
                    -c * upwind(c) + spec.diffusivity * lap + spec.reaction * c * (1.0 - c)
                }
                PdeFamily::C => {
                    let x = spec.x(i);
                    let s = spec.speed_at(x, t);
                    -s * upwind(s) + spec.diffusivity_at(x) * lap
                }
            };
            out.set(r, i, v);
        }
    }
    Ok(out)
}

/// RK4 reference states at `times` (ascending, on the reference grid).
pub fn reference_solve(spec: &PdeSpec, u0: &Tensor, times: &[f64]) -> Result<Vec<Tensor>> {
    let umax = u0.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    spec.check_cfl(spec.reference_dt, umax.max(1.0))?;
    let mut out = Vec::with_capacity(times.len());
    let mut state = u0.clone();
    let mut t = 0.0;
    for &target in times {
        if target < t - 1e-12 {
            return Err(invalid("times must be ascending"));
        }
        let steps = ((target - t) / spec.reference_dt).round() as usize;
        if (steps as f64 * spec.reference_dt - (target - t)).abs() > 1e-9 {
            return Err(invalid(format!("time {target} is off the reference grid")));
        }
        if steps > 0 {
            let s = SolverSpec::new(Method::Rk4, steps, t, target)?;
            state = integrate(|v: &Tensor, tt| reference_rhs(v, tt, spec), &state, &s)?
                .last()
                .clone();
        }
        t = target;
        out.push(state.clone());
    }
    Ok(out)
}
