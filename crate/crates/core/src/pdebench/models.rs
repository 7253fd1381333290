use serde::{Deserialize, Serialize};

use super::dataset::PdeDataset;
use super::PdeSpec;
use crate::error::{invalid, Result};
use crate::gradcore::{Eval, Ops, Rng, Tape, Tensor, Var};
use crate::netzoo::ParamSet;
use crate::odesolve::{solver_step, Method};
use crate::trainlab::{train, LossRequest, LossVars, Objective, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelClass {
    M1,
    M2,
    M3,
    M4,
}

impl ModelClass {
    pub const ALL: [ModelClass; 4] = [
        ModelClass::M1,
        ModelClass::M2,
        ModelClass::M3,
        ModelClass::M4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelClass::M1 => "M1",
            ModelClass::M2 => "M2",
            ModelClass::M3 => "M3",
            ModelClass::M4 => "M4",
        }
    }

    /// Whether the class integrates a learned right-hand side.
    pub fn integrates(self) -> bool {
        matches!(self, ModelClass::M3 | ModelClass::M4)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeModelConfig {
    /// Hidden width of the direct maps (M1, M2).
    pub hidden: usize,
    /// Hidden width of the stencil network (M3).
    pub stencil_hidden: usize,
    pub m3_dt: f64,
    pub m4_dt: f64,
}

impl Default for PdeModelConfig {
    fn default() -> Self {
        PdeModelConfig {
            hidden: 64,
            stencil_hidden: 16,
            m3_dt: 0.025,
            m4_dt: 0.0125,
        }
    }
}

const STENCIL: usize = 5;
/// Diffusion parameters are stored divided by this, so an optimizer step
/// cannot flip the sign of a small diffusivity.
pub const DIFF_SCALE: f64 = 0.1;
/// Fourier modes in the M4 spatial coefficient profiles.
pub const PROFILE_MODES: usize = 3;

/// Learned propagator for one of the four model classes.
///
/// * M1: `u0 + MLP(u0)`, one fixed horizon.
/// * M2: `u0 + MLP([u0, T])`.
/// * M3: RK4 on `du/dt = g(u)` with `g` a pointwise MLP (plus linear skip)
///   over the 5-point neighbourhood, expressed as value, first and second
///   differences at radii 1 and 2 and standardized per feature.
/// * M4: RK4 on `a·D₁u + b·D₂u + r₁u + r₂u²`, `a = a₀ + a(x) + a₁u` and
///   `b = b₀ + b(x) + b₁u`, with backward `D₁` and central `D₂`. The
///   profiles `a(x)`, `b(x)` are zero-mean Fourier series of
///   [`PROFILE_MODES`] modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeModel {
    pub class: ModelClass,
    pub spec: PdeSpec,
    pub params: ParamSet,
    /// Integration step for M3/M4.
    pub dt: f64,
    /// Per-feature divisor of the stencil features (M3).
    pub feature_scale: Vec<f64>,
}

impl PdeModel {
    pub fn new(class: ModelClass, spec: &PdeSpec, cfg: &PdeModelConfig, rng: &Rng) -> Result<Self> {
        spec.validate()?;
        let n = spec.grid;
        let mut r = rng.stream(class.name());
        let mut mlp = |input: usize, hidden: usize, output: usize, out_std: f64| {
            vec![
                (
                    "w1".to_string(),
                    r.normal_tensor(&[input, hidden], 1.0 / (input as f64).sqrt()),
                ),
                ("b1".to_string(), Tensor::zeros(&[1, hidden])),
                (
                    "w2".to_string(),
                    r.normal_tensor(&[hidden, output], out_std),
                ),
                ("b2".to_string(), Tensor::zeros(&[1, output])),
            ]
        };
        let (named, dt) = match class {
            ModelClass::M1 => (mlp(n, cfg.hidden, n, 0.01), 0.0),
            ModelClass::M2 => (mlp(n + 1, cfg.hidden, n, 0.01), 0.0),
            ModelClass::M3 => {
                let mut v = vec![("w_lin".to_string(), Tensor::zeros(&[STENCIL, 1]))];
                v.extend(mlp(STENCIL, cfg.stencil_hidden, 1, 0.01));
                (v, cfg.m3_dt)
            }
            ModelClass::M4 => {
                let s = || Tensor::zeros(&[1, 1]);
                let row = || Tensor::zeros(&[1, 2 * PROFILE_MODES]);
                let v = vec![
                    ("adv0".to_string(), s()),
                    ("adv_profile".to_string(), row()),
                    ("adv_lin".to_string(), s()),
                    ("diff0".to_string(), s()),
                    ("diff_profile".to_string(), row()),
                    ("diff_lin".to_string(), s()),
                    ("react1".to_string(), s()),
                    ("react2".to_string(), s()),
                ];
                (v, cfg.m4_dt)
            }
        };
        if class.integrates() {
            if !(dt > 0.0) {
                return Err(invalid("integration step must be > 0"));
            }
            spec.check_cfl(dt, 1.0)?;
        }
        for (i, (name, _)) in named.iter().enumerate() {
            if named[..i].iter().any(|(m, _)| m == name) {
                return Err(invalid(format!("duplicate parameter {name}")));
            }
        }
        Ok(PdeModel {
            class,
            spec: spec.clone(),
            params: ParamSet::from_tensors(named),
            dt,
            feature_scale: vec![1.0; STENCIL],
        })
    }

    fn idx(&self, name: &str) -> usize {
        self.params.index_of(name).expect("parameter exists")
    }

    /// Fixed map from the 5-point neighbourhood to value and differences.
    fn stencil_basis(&self) -> Result<Tensor> {
        let dx = self.spec.dx();
        let cols: [[f64; STENCIL]; STENCIL] = [
            [0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, -0.5 / dx, 0.0, 0.5 / dx, 0.0],
            [0.0, 1.0 / (dx * dx), -2.0 / (dx * dx), 1.0 / (dx * dx), 0.0],
            [-0.25 / dx, 0.0, 0.0, 0.0, 0.25 / dx],
            [
                0.25 / (dx * dx),
                0.0,
                -0.5 / (dx * dx),
                0.0,
                0.25 / (dx * dx),
            ],
        ];
        let mut m = Tensor::zeros(&[STENCIL, STENCIL]);
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m.set(i, j, v / self.feature_scale[j]);
            }
        }
        Ok(m)
    }

    /// Raw (unscaled) stencil features of states `u`, `[rows·N, 5]`.
    pub fn stencil_features(&self, u: &Tensor) -> Result<Tensor> {
        let unscaled = PdeModel {
            feature_scale: vec![1.0; STENCIL],
            ..self.clone()
        };
        u.neighbors(2)?.matmul(&unscaled.stencil_basis()?)
    }

    /// Sets the M3 feature scale to the per-feature RMS over `data`'s states.
    pub fn fit_feature_scale(&mut self, data: &PdeDataset) -> Result<()> {
        let idx = data.all();
        let mut sums = vec![0.0; STENCIL];
        let mut count = 0usize;
        for &t in &data.times {
            let f = self.stencil_features(&data.at(t, &idx)?)?;
            for r in 0..f.rows() {
                for (j, s) in sums.iter_mut().enumerate() {
                    *s += f.get(r, j).powi(2);
                }
            }
            count += f.rows();
        }
        self.feature_scale = sums
            .iter()
            .map(|s| (s / count as f64).sqrt().max(1e-8))
            .collect();
        Ok(())
    }

    /// Rows `cos(kx)`, `sin(kx)` for `k = 1..=PROFILE_MODES`, `[2K, N]`.
    fn profile_basis(&self) -> Tensor {
        let n = self.spec.grid;
        let mut b = Tensor::zeros(&[2 * PROFILE_MODES, n]);
        for k in 0..PROFILE_MODES {
            let w = (k + 1) as f64 * 2.0 * std::f64::consts::PI / self.spec.length;
            for i in 0..n {
                let (sin, cos) = (w * self.spec.x(i)).sin_cos();
                b.set(2 * k, i, cos);
                b.set(2 * k + 1, i, sin);
            }
        }
        b
    }

    fn broadcast_scalar<O: Ops>(
        &self,
        ops: &O,
        s: &O::V,
        rows: usize,
        cols: usize,
    ) -> Result<O::V> {
        let ones = ops.constant(Tensor::full(&[rows, 1], 1.0))?;
        ops.broadcast_cols(&ops.matmul(&ones, s)?, cols)
    }

    /// `s₀ + profile(x) + s₁·u` on `[rows, N]`.
    fn coefficient<O: Ops>(&self, ops: &O, p: &[O::V], names: [&str; 3], u: &O::V) -> Result<O::V> {
        let c = self.raw_coefficient(ops, p, names, u)?;
        if names[0] == "diff0" {
            ops.scale(&c, DIFF_SCALE)
        } else {
            Ok(c)
        }
    }

    fn raw_coefficient<O: Ops>(
        &self,
        ops: &O,
        p: &[O::V],
        names: [&str; 3],
        u: &O::V,
    ) -> Result<O::V> {
        let shape = ops.shape(u);
        let n = shape[1];
        let ones_row = ops.constant(Tensor::full(&[1, n], 1.0))?;
        let profile = ops.matmul(&p[self.idx(names[1])], &ops.constant(self.profile_basis())?)?;
        let base = ops.add(&ops.matmul(&p[self.idx(names[0])], &ones_row)?, &profile)?;
        let lin = ops.mul(
            &self.broadcast_scalar(ops, &p[self.idx(names[2])], shape[0], n)?,
            u,
        )?;
        ops.add_row(&lin, &base)
    }

    /// Learned right-hand side on `[rows, N]` states (M3/M4).
    pub fn rhs_ops<O: Ops>(&self, ops: &O, p: &[O::V], u: &O::V) -> Result<O::V> {
        let shape = ops.shape(u);
        let (rows, n) = (shape[0], shape[1]);
        match self.class {
            ModelClass::M3 => {
                let feats =
                    ops.matmul(&ops.neighbors(u, 2)?, &ops.constant(self.stencil_basis()?)?)?;
                let lin = ops.matmul(&feats, &p[self.idx("w_lin")])?;
                let h = ops.tanh(
                    &ops.add_row(&ops.matmul(&feats, &p[self.idx("w1")])?, &p[self.idx("b1")])?,
                )?;
                let out = ops.add_row(
                    &ops.add(&lin, &ops.matmul(&h, &p[self.idx("w2")])?)?,
                    &p[self.idx("b2")],
                )?;
                ops.reshape(&out, &[rows, n])
            }
            ModelClass::M4 => {
                let dx = self.spec.dx();
                let basis = Tensor::from_rows(&[
                    vec![-1.0 / dx, 1.0 / (dx * dx)],
                    vec![1.0 / dx, -2.0 / (dx * dx)],
                    vec![0.0, 1.0 / (dx * dx)],
                ])?;
                let diffs = ops.matmul(&ops.neighbors(u, 1)?, &ops.constant(basis)?)?;
                let d1 = ops.reshape(&ops.slice_cols(&diffs, 0, 1)?, &[rows, n])?;
                let d2 = ops.reshape(&ops.slice_cols(&diffs, 1, 2)?, &[rows, n])?;
                let a = self.coefficient(ops, p, ["adv0", "adv_profile", "adv_lin"], u)?;
                let b = self.coefficient(ops, p, ["diff0", "diff_profile", "diff_lin"], u)?;
                let r1 = self.broadcast_scalar(ops, &p[self.idx("react1")], rows, n)?;
                let r2 = self.broadcast_scalar(ops, &p[self.idx("react2")], rows, n)?;
                let react = ops.mul(&ops.add(&r1, &ops.mul(&r2, u)?)?, u)?;
                ops.add(&ops.add(&ops.mul(&a, &d1)?, &ops.mul(&b, &d2)?)?, &react)
            }
            _ => Err(invalid(format!(
                "{} has no right-hand side",
                self.class.name()
            ))),
        }
    }

    pub fn rhs(&self, u: &Tensor) -> Result<Tensor> {
        let p = self.params.bind(&Eval)?;
        self.rhs_ops(&Eval, &p, u)
    }

    fn direct_ops<O: Ops>(&self, ops: &O, p: &[O::V], u0: &O::V, horizon: f64) -> Result<O::V> {
        let input = match self.class {
            ModelClass::M1 => u0.clone(),
            _ => {
                let rows = ops.shape(u0)[0];
                ops.concat_cols(u0, &ops.constant(Tensor::full(&[rows, 1], horizon))?)?
            }
        };
        let h =
            ops.tanh(&ops.add_row(&ops.matmul(&input, &p[self.idx("w1")])?, &p[self.idx("b1")])?)?;
        let out = ops.add_row(&ops.matmul(&h, &p[self.idx("w2")])?, &p[self.idx("b2")])?;
        ops.add(u0, &out)
    }

    /// Predicted states at ascending `horizons` from `u0` at time 0, with
    /// integration step `dt` for M3/M4. A zero horizon returns `u0`.
    pub fn predict_ops<O: Ops>(
        &self,
        ops: &O,
        p: &[O::V],
        u0: &O::V,
        horizons: &[f64],
        dt: f64,
    ) -> Result<Vec<O::V>> {
        if horizons.windows(2).any(|w| w[1] < w[0]) || horizons.iter().any(|h| *h < 0.0) {
            return Err(invalid("horizons must be ascending and >= 0"));
        }
        if !self.class.integrates() {
            return horizons
                .iter()
                .map(|&h| {
                    if h == 0.0 {
                        Ok(u0.clone())
                    } else {
                        self.direct_ops(ops, p, u0, h)
                    }
                })
                .collect();
        }
        let field = |u: &O::V, _t: f64| self.rhs_ops(ops, p, u);
        let mut out = Vec::with_capacity(horizons.len());
        let mut state = u0.clone();
        let mut step = 0usize;
        for &h in horizons {
            let target = (h / dt).round() as usize;
            if (target as f64 * dt - h).abs() > 1e-9 {
                return Err(invalid(format!(
                    "horizon {h} is not a multiple of step {dt}"
                )));
            }
            while step < target {
                state = solver_step(ops, &field, Method::Rk4, &state, step as f64 * dt, dt)?;
                step += 1;
            }
            out.push(state.clone());
        }
        Ok(out)
    }

    /// Largest advection and diffusion numbers of the learned M4 coefficients
    /// over the states `u`.
    fn m4_cfl(&self, u: &Tensor, dt: f64) -> Result<()> {
        let p = self.params.bind(&Eval)?;
        let a = self.coefficient(&Eval, &p, ["adv0", "adv_profile", "adv_lin"], u)?;
        let b = self.coefficient(&Eval, &p, ["diff0", "diff_profile", "diff_lin"], u)?;
        let dx = self.spec.dx();
        let amax = a.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bmax = b.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if bmax * dt / (dx * dx) > 0.25 || amax * dt / dx > 0.5 {
            return Err(invalid(format!(
                "CFL violated by learned coefficients: |a|max {amax:.3}, |b|max {bmax:.3}, dt {dt}"
            )));
        }
        Ok(())
    }

    pub fn predict_with_step(&self, u0: &Tensor, horizons: &[f64], dt: f64) -> Result<Vec<Tensor>> {
        if self.class == ModelClass::M4 {
            self.m4_cfl(u0, dt)?;
        }
        let p = self.params.bind(&Eval)?;
        self.predict_ops(&Eval, &p, u0, horizons, dt)?
            .into_iter()
            .map(|s| s.ensure_finite("pde predict"))
            .collect()
    }

    pub fn predict(&self, u0: &Tensor, horizons: &[f64]) -> Result<Vec<Tensor>> {
        self.predict_with_step(u0, horizons, self.dt)
    }

    /// M4 parameters that reproduce the reference right-hand side of
    /// families A and B (positive states for B).
    pub fn set_true_coefficients(&mut self) -> Result<()> {
        if self.class != ModelClass::M4 {
            return Err(invalid("true coefficients exist only for M4"));
        }
        let s = &self.spec;
        let (adv0, adv_lin, diff0, r1, r2) = match s.family {
            super::PdeFamily::A => (-s.speed, 0.0, s.diffusivity, 0.0, 0.0),
            super::PdeFamily::B => (0.0, -1.0, s.diffusivity, s.reaction, -s.reaction),
            super::PdeFamily::C => return Err(invalid("family C has time-dependent coefficients")),
        };
        for (name, v) in [
            ("adv0", adv0),
            ("adv_lin", adv_lin),
            ("diff0", diff0 / DIFF_SCALE),
            ("react1", r1),
            ("react2", r2),
        ] {
            self.params.set(name, &Tensor::scalar(v))?;
        }
        Ok(())
    }

    /// Horizons the class is trained on.
    pub fn train_horizons(&self) -> Vec<f64> {
        match self.class {
            ModelClass::M1 => vec![self.spec.train_horizon],
            _ => self.spec.train_horizons.clone(),
        }
    }
}

/// Mean squared error over the training horizons.
pub struct PdeObjective<'a> {
    model: PdeModel,
    data: &'a PdeDataset,
    horizons: Vec<f64>,
}

impl<'a> PdeObjective<'a> {
    pub fn new(model: &PdeModel, data: &'a PdeDataset) -> Result<Self> {
        let horizons = model.train_horizons();
        for &h in &horizons {
            data.record_index(h)?;
        }
        Ok(PdeObjective {
            model: model.clone(),
            data,
            horizons,
        })
    }
}

impl Objective for PdeObjective<'_> {
    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn losses(&self, tape: &Tape, p: &[Var], req: &LossRequest) -> Result<LossVars> {
        if !req.task {
            return Ok(LossVars::default());
        }
        let u0 = tape.constant(self.data.initial(req.batch)?)?;
        let preds = self
            .model
            .predict_ops(tape, p, &u0, &self.horizons, self.model.dt)?;
        let mut total: Option<Var> = None;
        for (pred, &h) in preds.iter().zip(&self.horizons) {
            let target = tape.constant(self.data.at(h, req.batch)?)?;
            let term = tape.mean(&tape.square(&tape.sub(pred, &target)?)?)?;
            total = Some(match total {
                Some(t) => tape.add(&t, &term)?,
                None => term,
            });
        }
        let task = tape.scale(
            &total.expect("at least one horizon"),
            1.0 / self.horizons.len() as f64,
        )?;
        Ok(LossVars {
            task: Some(task),
            field: None,
        })
    }
}

impl PdeModelConfig {
    /// Training defaults per class.
    pub fn train_config(class: ModelClass, seed: u64) -> TrainConfig {
        let (epochs, batch_size, lr) = match class {
            ModelClass::M1 | ModelClass::M2 => (400, 0, 3e-3),
            ModelClass::M3 => (30, 10, 3e-3),
            ModelClass::M4 => (40, 5, 3e-2),
        };
        TrainConfig {
            epochs,
            batch_size,
            lr,
            field_weight: 0.0,
            log_conflict: false,
            seed,
            ..Default::default()
        }
    }
}

/// Builds and trains one model class on `data`.
pub fn train_pde_model(
    class: ModelClass,
    data: &PdeDataset,
    cfg: &PdeModelConfig,
    train_cfg: &TrainConfig,
    rng: &Rng,
) -> Result<(PdeModel, TrainOutcome)> {
    let mut model = PdeModel::new(class, &data.spec, cfg, rng)?;
    if class == ModelClass::M3 {
        model.fit_feature_scale(data)?;
    }
    let obj = PdeObjective::new(&model, data)?;
    let out = train(&mut model.params, &obj, train_cfg)?;
    Ok((model, out))
}
