use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Activation, Family, ModelConfig};
use super::params::ParamSet;
use crate::error::{invalid, shape_err, FieldError, Result};
use crate::fieldmetrics::Trajectory;
use crate::gradcore::{Dual, DualV, Eval, Ops, Rng, Tape, Tensor, Traced};
use crate::odesolve::{solver_step, Method, SolverSpec};

const CHECKPOINT_FORMAT: &str = "fieldlab-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Parameter positions of one field / residual block.
#[derive(Clone, Debug)]
struct Block {
    w1: usize,
    b1: usize,
    wt: Option<usize>,
    wu: Option<usize>,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Debug)]
struct Slots {
    enc_w: usize,
    enc_b: usize,
    endpoint: Option<(usize, usize)>,
    blocks: Vec<Block>,
    corr: Vec<usize>,
    head_w: usize,
    head_b: usize,
}

fn layout(cfg: &ModelConfig) -> (Vec<(String, Vec<usize>)>, Slots) {
    let d = cfg.hidden_dim;
    let w = cfg.field_width();
    let mut names: Vec<(String, Vec<usize>)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| {
        names.push((name, shape));
        names.len() - 1
    };
    let enc_in = cfg.drive_dim.unwrap_or(cfg.input_dim);
    let enc_w = push("enc.w".into(), vec![enc_in, d]);
    let enc_b = push("enc.b".into(), vec![1, d]);
    let mut endpoint = None;
    let mut blocks = Vec::new();
    let mut corr = Vec::new();
    let block = |push: &mut dyn FnMut(String, Vec<usize>) -> usize, prefix: &str| Block {
        w1: push(format!("{prefix}.w1"), vec![d, w]),
        b1: push(format!("{prefix}.b1"), vec![1, w]),
        wt: cfg
            .family
            .uses_time()
            .then(|| push(format!("{prefix}.wt"), vec![1, w])),
        wu: cfg
            .drive_dim
            .map(|u| push(format!("{prefix}.wu"), vec![u, w])),
        w2: push(format!("{prefix}.w2"), vec![w, d]),
        b2: push(format!("{prefix}.b2"), vec![1, d]),
    };
    let out_width = match cfg.family {
        Family::Endpoint => {
            let we = cfg.endpoint_width();
            endpoint = Some((
                push("body.w".into(), vec![d, we]),
                push("body.b".into(), vec![1, we]),
            ));
            we
        }
        Family::Residual => {
            for l in 0..cfg.layers() {
                blocks.push(block(&mut push, &format!("layer{l}")));
            }
            d
        }
        _ => {
            blocks.push(block(&mut push, "field"));
            if cfg.family == Family::Hybrid {
                for l in 0..cfg.layers() {
                    corr.push(push(format!("corr{l}"), vec![1, d]));
                }
            }
            d
        }
    };
    let head_w = push("head.w".into(), vec![out_width, cfg.classes]);
    let head_b = push("head.b".into(), vec![1, cfg.classes]);
    (
        names,
        Slots {
            enc_w,
            enc_b,
            endpoint,
            blocks,
            corr,
            head_w,
            head_b,
        },
    )
}

fn init_tensor(name: &str, shape: &[usize], rng: &mut Rng) -> Tensor {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    let fan_in = shape[0] as f64;
    match leaf {
        "w" | "w1" | "wu" => rng.normal_tensor(shape, 1.0 / fan_in.sqrt()),
        "wt" => rng.normal_tensor(shape, 0.5),
        "w2" => rng.normal_tensor(shape, 0.5 / fan_in.sqrt()),
        _ => Tensor::zeros(shape),
    }
}

/// Random matrix with orthonormal columns `[rows, cols]` (rows ≥ cols) or
/// orthonormal rows (rows < cols), via QR of a Gaussian draw.
pub fn orthonormal(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let (m, n) = if rows >= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let g = nalgebra::DMatrix::from_fn(m, n, |_, _| rng.normal());
    let q = g.qr().q();
    let mut out = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out.set(i, j, v);
        }
    }
    out
}

/// Hidden states `h_0..h_L` and logits of one forward pass.
#[derive(Clone, Debug)]
pub struct Pass<V> {
    pub hidden: Vec<V>,
    pub logits: V,
}

/// A model from one of the families in [`Family`], with flat parameters.
#[derive(Clone, Debug)]
pub struct FieldModel {
    config: ModelConfig,
    params: ParamSet,
    phi: Vec<Option<Tensor>>,
    slots: Slots,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    theta: Vec<f64>,
    phi: Vec<Option<Tensor>>,
}

impl FieldModel {
    /// Seeded initialization; parameters and layer embeddings use separate
    /// child streams of `rng`.
    pub fn new(config: ModelConfig, rng: &Rng) -> Result<Self> {
        config.validate()?;
        let (names, slots) = layout(&config);
        let mut init = rng.stream("init");
        let tensors = names
            .into_iter()
            .map(|(n, shape)| {
                let t = init_tensor(&n, &shape, &mut init);
                (n, t)
            })
            .collect();
        let params = ParamSet::from_tensors(tensors);
        let mut phi_rng = rng.stream("phi");
        let d = config.hidden_dim;
        let phi = Self::layer_widths(&config)
            .into_iter()
            .map(|w| (w != d).then(|| orthonormal(w, d, &mut phi_rng)))
            .collect();
        Ok(FieldModel {
            config,
            params,
            phi,
            slots,
        })
    }

    fn layer_widths(cfg: &ModelConfig) -> Vec<usize> {
        let mut w = vec![cfg.hidden_dim; cfg.layers() + 1];
        if cfg.family == Family::Endpoint {
            w[1] = cfg.endpoint_width();
        }
        w
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn family(&self) -> Family {
        self.config.family
    }

    pub fn num_layers(&self) -> usize {
        self.config.layers()
    }

    /// Width of each raw hidden state `h_0..h_L`.
    pub fn widths(&self) -> Vec<usize> {
        Self::layer_widths(&self.config)
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn theta(&self) -> &[f64] {
        self.params.theta()
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        self.params.set_theta(theta)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Copy with the given solver replacing the configured one.
    pub fn with_solver(&self, spec: SolverSpec) -> Result<FieldModel> {
        if self.config.family != Family::Continuous {
            return Err(invalid("only the continuous family can change solver"));
        }
        spec.validate()?;
        if spec.steps != self.num_layers() {
            let mut out = self.clone();
            out.config.solver = Some(spec);
            out.phi = vec![None; spec.steps + 1];
            return Ok(out);
        }
        let mut out = self.clone();
        out.config.solver = Some(spec);
        Ok(out)
    }

    fn act<O: Ops>(&self, ops: &O, v: &O::V) -> Result<O::V> {
        match self.config.activation {
            Activation::Tanh => ops.tanh(v),
            Activation::Identity => Ok(v.clone()),
        }
    }

    fn drive<O: Ops>(&self, ops: &O, x: &O::V, slice: usize) -> Result<Option<O::V>> {
        match self.config.drive_dim {
            Some(u) => Ok(Some(ops.slice_cols(x, slice * u, (slice + 1) * u)?)),
            None => Ok(None),
        }
    }

    fn check_input<O: Ops>(&self, ops: &O, x: &O::V) -> Result<()> {
        let s = ops.shape(x);
        if s.len() != 2 || s[1] != self.config.input_dim {
            return Err(shape_err(
                "forward",
                format!(
                    "input {:?}, model expects [_, {}]",
                    s, self.config.input_dim
                ),
            ));
        }
        Ok(())
    }

    /// Encoder `h_0 = x W + b` (driven mode reads the first slice).
    pub fn encode_ops<O: Ops>(&self, ops: &O, p: &[O::V], x: &O::V) -> Result<O::V> {
        let src = match self.drive(ops, x, 0)? {
            Some(u) => u,
            None => x.clone(),
        };
        ops.add_row(
            &ops.matmul(&src, &p[self.slots.enc_w])?,
            &p[self.slots.enc_b],
        )
    }

    pub fn head_ops<O: Ops>(&self, ops: &O, p: &[O::V], h: &O::V) -> Result<O::V> {
        ops.add_row(
            &ops.matmul(h, &p[self.slots.head_w])?,
            &p[self.slots.head_b],
        )
    }

    fn block_ops<O: Ops>(
        &self,
        ops: &O,
        p: &[O::V],
        blk: &Block,
        h: &O::V,
        t: f64,
        u: Option<&O::V>,
    ) -> Result<O::V> {
        let bias = match blk.wt {
            Some(wt) => ops.add(&p[blk.b1], &ops.scale(&p[wt], t)?)?,
            None => p[blk.b1].clone(),
        };
        let mut pre = ops.add_row(&ops.matmul(h, &p[blk.w1])?, &bias)?;
        if let (Some(wu), Some(u)) = (blk.wu, u) {
            pre = ops.add(&pre, &ops.matmul(u, &p[wu])?)?;
        }
        let a = self.act(ops, &pre)?;
        ops.add_row(&ops.matmul(&a, &p[blk.w2])?, &p[blk.b2])
    }

    /// The shared vector field `f_θ(h, t)` (flow families, undriven).
    pub fn vector_field_ops<O: Ops>(&self, ops: &O, p: &[O::V], h: &O::V, t: f64) -> Result<O::V> {
        if !self.config.family.shares_field() || self.config.drive_dim.is_some() {
            return Err(invalid(format!(
                "{} model has no single undriven vector field",
                self.config.family.name()
            )));
        }
        self.block_ops(ops, p, &self.slots.blocks[0], h, t, None)
    }

    pub fn vector_field(&self, h: &Tensor, t: f64) -> Result<Tensor> {
        let p = self.params.bind(&Eval)?;
        self.vector_field_ops(&Eval, &p, h, t)
    }

    fn solver(&self) -> SolverSpec {
        match self.config.solver {
            Some(s) if self.config.family == Family::Continuous => s,
            _ => {
                let l = self.num_layers();
                SolverSpec {
                    method: Method::Euler,
                    steps: l,
                    t0: 0.0,
                    t1: match self.config.family {
                        Family::Residual => l as f64,
                        _ => self.config.horizon,
                    },
                }
            }
        }
    }

    /// Layer map `h_ℓ -> h_{ℓ+1}`.
    pub fn step_ops<O: Ops>(
        &self,
        ops: &O,
        p: &[O::V],
        layer: usize,
        h: &O::V,
        x: &O::V,
    ) -> Result<O::V> {
        if layer >= self.num_layers() {
            return Err(FieldError::OutOfRange {
                index: layer,
                limit: self.num_layers(),
            });
        }
        if let Some((w, b)) = self.slots.endpoint {
            let pre = ops.add_row(&ops.matmul(h, &p[w])?, &p[b])?;
            return self.act(ops, &pre);
        }
        let u = self.drive(ops, x, layer)?;
        let spec = self.solver();
        let (blk, corr) = match self.config.family {
            Family::Residual => (&self.slots.blocks[layer], None),
            Family::Hybrid => (&self.slots.blocks[0], Some(self.slots.corr[layer])),
            _ => (&self.slots.blocks[0], None),
        };
        let field = |z: &O::V, t: f64| -> Result<O::V> {
            let f = self.block_ops(ops, p, blk, z, t, u.as_ref())?;
            match corr {
                Some(c) => ops.add_row(&f, &p[c]),
                None => Ok(f),
            }
        };
        solver_step(ops, &field, spec.method, h, spec.time(layer), spec.dt())
    }

    pub fn forward_ops<O: Ops>(&self, ops: &O, p: &[O::V], x: &O::V) -> Result<Pass<O::V>> {
        self.check_input(ops, x)?;
        let mut hidden = Vec::with_capacity(self.num_layers() + 1);
        hidden.push(self.encode_ops(ops, p, x)?);
        for l in 0..self.num_layers() {
            let next = self.step_ops(ops, p, l, &hidden[l], x)?;
            hidden.push(next);
        }
        let logits = self.head_ops(ops, p, &hidden[hidden.len() - 1])?;
        Ok(Pass { hidden, logits })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Pass<Tensor>> {
        let p = self.params.bind(&Eval)?;
        self.forward_ops(&Eval, &p, x)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.logits)
    }

    /// Standardized trajectory `z_ℓ = φ_ℓ(h_ℓ)` and logits.
    pub fn forward_with_trajectory(&self, x: &Tensor) -> Result<(Trajectory, Tensor)> {
        let pass = self.forward(x)?;
        let states = self.standardize(pass.hidden)?;
        let spec = self.solver();
        let times = if self.config.family == Family::Endpoint {
            vec![0.0, 1.0]
        } else {
            spec.times()
        };
        Ok((Trajectory::with_times(states, times)?, pass.logits))
    }

    /// Applies the layer embeddings φ_ℓ.
    pub fn standardize(&self, hidden: Vec<Tensor>) -> Result<Vec<Tensor>> {
        hidden
            .into_iter()
            .zip(&self.phi)
            .map(|(h, phi)| match phi {
                Some(q) => h.matmul(q),
                None => Ok(h),
            })
            .collect()
    }

    fn check_tangent(&self, v: &Tensor, rows: usize, width: usize) -> Result<()> {
        if v.shape() != [rows, width] {
            return Err(shape_err(
                "layer_jvp",
                format!("direction {:?}, expected [{rows}, {width}]", v.shape()),
            ));
        }
        Ok(())
    }

    /// `J_ℓ v` where `J_ℓ = ∂h_{ℓ+1}/∂h_ℓ` at the recorded `h_ℓ(x)`.
    pub fn layer_jvp(&self, x: &Tensor, layer: usize, v: &Tensor) -> Result<Tensor> {
        if layer >= self.num_layers() {
            return Err(FieldError::OutOfRange {
                index: layer,
                limit: self.num_layers(),
            });
        }
        let pass = self.forward(x)?;
        self.layer_jvp_at(x, &pass.hidden[layer], layer, v)
    }

    /// `J_ℓ v` at a given state `h_ℓ`.
    pub fn layer_jvp_at(&self, x: &Tensor, h: &Tensor, layer: usize, v: &Tensor) -> Result<Tensor> {
        self.check_tangent(v, h.rows(), h.cols())?;
        let p = self.params.bind(&Eval)?;
        let out = self.layer_jvp_ops(&Eval, &p, x, h, layer, v)?;
        Ok(out)
    }

    /// `J_ℓ v` built from `ops` values, so that over a tape the result is
    /// differentiable in θ (reverse-over-forward).
    pub fn layer_jvp_ops<O: Ops>(
        &self,
        ops: &O,
        p: &[O::V],
        x: &O::V,
        h: &O::V,
        layer: usize,
        v: &Tensor,
    ) -> Result<O::V> {
        let dual = Dual::new(ops);
        let dp: Vec<DualV<O::V>> = p.iter().map(|t| dual.lift(t.clone())).collect();
        let dx = dual.lift(x.clone());
        let dh = dual.seed(h.clone(), ops.constant(v.clone())?)?;
        let out = self.step_ops(&dual, &dp, layer, &dh, &dx)?;
        dual.tangent_of(&out)
    }

    /// `J_ℓᵀ u` at a given state `h_ℓ` (row-wise vector-Jacobian product).
    pub fn layer_vjp_at(&self, x: &Tensor, h: &Tensor, layer: usize, u: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape)?;
        let xv = tape.constant(x.clone())?;
        let hv = tape.input(h.clone())?;
        let out = self.step_ops(&tape, &p, layer, &hv, &xv)?;
        if tape.shape(&out) != u.shape() {
            return Err(shape_err(
                "layer_vjp",
                format!(
                    "cotangent {:?}, layer output {:?}",
                    u.shape(),
                    tape.shape(&out)
                ),
            ));
        }
        let uv = tape.constant(u.clone())?;
        let loss = tape.sum(&tape.mul(&out, &uv)?)?;
        Ok(tape.backward(loss)?.wrt(hv))
    }

    /// Tangents of every `h_ℓ` when `h_0` moves along `v`: entry `ℓ` equals
    /// `J_{ℓ−1}···J_0 v`.
    pub fn transport(&self, x: &Tensor, v: &Tensor) -> Result<Vec<Tensor>> {
        let p = self.params.bind(&Eval)?;
        let pass = self.forward_ops(&Eval, &p, x)?;
        self.check_tangent(v, x.rows(), self.config.hidden_dim)?;
        let dual = Dual::new(&Eval);
        let dp: Vec<_> = p.into_iter().map(|t| dual.lift(t)).collect();
        let dx = dual.lift(x.clone());
        let mut h = dual.seed(pass.hidden[0].clone(), v.clone())?;
        let mut out = vec![v.clone()];
        for l in 0..self.num_layers() {
            h = self.step_ops(&dual, &dp, l, &h, &dx)?;
            out.push(dual.tangent_of(&h)?);
        }
        Ok(out)
    }

    /// `J_{ℓ−1}···J_0 v` (for `ℓ = 0`, `v` itself).
    pub fn accumulated_jvp(&self, x: &Tensor, layer: usize, v: &Tensor) -> Result<Tensor> {
        if layer > self.num_layers() {
            return Err(FieldError::OutOfRange {
                index: layer,
                limit: self.num_layers() + 1,
            });
        }
        Ok(self.transport(x, v)?.swap_remove(layer))
    }

    /// Tangents of every `h_ℓ` and of the logits for an input perturbation `δ`.
    pub fn input_tangents(&self, x: &Tensor, delta: &Tensor) -> Result<Pass<Tensor>> {
        if x.shape() != delta.shape() {
            return Err(shape_err("input_tangents", "delta must match x"));
        }
        let dual = Dual::new(&Eval);
        let p: Vec<_> = self
            .params
            .bind(&Eval)?
            .into_iter()
            .map(|t| dual.lift(t))
            .collect();
        let dx = dual.seed(x.clone(), delta.clone())?;
        let pass = self.forward_ops(&dual, &p, &dx)?;
        Ok(Pass {
            hidden: pass
                .hidden
                .iter()
                .map(|h| dual.tangent_of(h))
                .collect::<Result<_>>()?,
            logits: dual.tangent_of(&pass.logits)?,
        })
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            theta: self.params.theta().to_vec(),
            phi: self.phi.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(invalid(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.config.validate()?;
        let (names, slots) = layout(&ck.config);
        let tensors = names
            .into_iter()
            .map(|(n, shape)| (n, Tensor::zeros(&shape)))
            .collect();
        let mut params = ParamSet::from_tensors(tensors);
        params.set_theta(&ck.theta)?;
        let widths = Self::layer_widths(&ck.config);
        if ck.phi.len() != widths.len() {
            return Err(invalid("checkpoint layer embeddings do not match depth"));
        }
        for (phi, &w) in ck.phi.iter().zip(&widths) {
            let ok = match phi {
                None => w == ck.config.hidden_dim,
                Some(q) => q.shape() == [w, ck.config.hidden_dim] && q.is_finite(),
            };
            if !ok {
                return Err(invalid("checkpoint layer embedding has the wrong shape"));
            }
        }
        Ok(FieldModel {
            config: ck.config,
            params,
            phi: ck.phi,
            slots,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?).map_err(|source| FieldError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| FieldError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_checkpoint_json(&text)
    }
}

/// Input-to-logits map, so generic JVP helpers apply to whole models.
impl Traced for FieldModel {
    fn parameters(&self) -> Vec<(String, Tensor)> {
        self.params.tensors()
    }

    fn apply<O: Ops>(&self, ops: &O, params: &[O::V], x: &O::V) -> Result<O::V> {
        Ok(self.forward_ops(ops, params, x)?.logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(family: Family) -> FieldModel {
        let mut cfg = ModelConfig::new(family, 3, 4, 3, 2);
        if family == Family::Continuous {
            cfg = cfg.with_solver(SolverSpec::new(Method::Rk4, 3, 0.0, 1.0).unwrap());
        }
        FieldModel::new(cfg, &Rng::new(1)).unwrap()
    }

    #[test]
    fn every_family_emits_l_plus_one_states() {
        let x = Rng::new(3).normal_tensor(&[5, 3], 1.0);
        for fam in Family::ALL {
            let m = model(fam);
            let (traj, logits) = m.forward_with_trajectory(&x).unwrap();
            assert_eq!(traj.len(), m.num_layers() + 1, "{}", fam.name());
            assert_eq!(traj.dim(), 4);
            assert_eq!(logits.shape(), &[5, 2]);
        }
        assert_eq!(model(Family::Endpoint).num_layers(), 1);
    }

    #[test]
    fn endpoint_width_is_embedded_to_common_dim() {
        let cfg = ModelConfig::new(Family::Endpoint, 3, 4, 1, 2).with_endpoint_width(7);
        let m = FieldModel::new(cfg, &Rng::new(0)).unwrap();
        let (traj, _) = m
            .forward_with_trajectory(&Tensor::row(&[0.1, 0.2, 0.3]))
            .unwrap();
        assert_eq!(traj.dim(), 4);
        assert_eq!(m.widths(), vec![4, 7]);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        for fam in Family::ALL {
            let m = model(fam);
            let back = FieldModel::from_checkpoint_json(&m.to_checkpoint_json().unwrap()).unwrap();
            assert_eq!(back.theta(), m.theta());
            let x = Tensor::row(&[0.3, -0.2, 0.9]);
            assert_eq!(back.logits(&x).unwrap(), m.logits(&x).unwrap());
        }
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(FieldModel::new(
            ModelConfig::new(Family::Continuous, 2, 2, 2, 2),
            &Rng::new(0)
        )
        .is_err());
        assert!(
            FieldModel::new(ModelConfig::new(Family::Residual, 2, 2, 0, 2), &Rng::new(0)).is_err()
        );
        let driven = ModelConfig::new(Family::Sharedfield, 5, 2, 2, 2).with_drive(2);
        assert!(FieldModel::new(driven, &Rng::new(0)).is_err());
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        assert!(model(Family::Residual)
            .logits(&Tensor::row(&[1.0]))
            .is_err());
        assert!(matches!(
            model(Family::Residual).layer_jvp(
                &Tensor::row(&[1.0, 2.0, 3.0]),
                3,
                &Tensor::row(&[0.0; 4])
            ),
            Err(FieldError::OutOfRange { .. })
        ));
    }
}
