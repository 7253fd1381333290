use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{teacher_field, TeacherSpec};
use crate::error::{invalid, FieldError, Result};
use crate::gradcore::{Rng, Tensor};
use crate::odesolve::integrate;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Sign of a fixed projection of the terminal state.
    #[default]
    A,
    /// Blend of the terminal projection and the mean angular velocity.
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherSample {
    pub z0: Vec<f64>,
    pub trajectory: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub label: usize,
    pub lambda: f64,
}

/// Samples plus batched views: `states[k]` and `derivs[k]` are `[N, n]`.
#[derive(Clone, Debug)]
pub struct TeacherDataset {
    pub spec: TeacherSpec,
    pub task: Task,
    pub lambda: f64,
    pub samples: Vec<TeacherSample>,
    pub x: Tensor,
    pub states: Vec<Tensor>,
    pub derivs: Vec<Tensor>,
    pub labels: Vec<usize>,
    lift: Tensor,
}

/// Lift matrix `P` `[n, D]` and label direction `w`, both fixed by the
/// observation seed so train and test splits share them.
fn fixed_maps(spec: &TeacherSpec) -> (Tensor, Vec<f64>) {
    let root = Rng::new(spec.obs_seed);
    let lift = root
        .stream("lift")
        .normal_tensor(&[spec.latent_dim, spec.obs_dim], spec.lift_scale);
    let mut r = root.stream("label");
    let w = (0..spec.latent_dim).map(|_| r.normal()).collect();
    (lift, w)
}

/// Least-squares inverse of `x = tanh(z P)`.
pub(crate) fn unlift(x: &Tensor, lift: &Tensor) -> Result<Tensor> {
    let n = lift.rows();
    let d = lift.cols();
    let p = DMatrix::from_row_slice(n, d, lift.data());
    let gram = (&p * p.transpose())
        .try_inverse()
        .ok_or_else(|| invalid("observation lift is rank deficient"))?;
    let pinv = p.transpose() * gram;
    let mut out = Tensor::zeros(&[x.rows(), n]);
    for r in 0..x.rows() {
        let y = DMatrix::from_row_slice(
            1,
            d,
            &x.row_slice(r).iter().map(|v| v.atanh()).collect::<Vec<_>>(),
        );
        let z = y * &pinv;
        for c in 0..n {
            out.set(r, c, z[(0, c)]);
        }
    }
    out.ensure_finite("unlift")
}

fn winding(path: &[Tensor], row: usize) -> f64 {
    if path[0].cols() < 2 {
        return 0.0;
    }
    let angle = |t: &Tensor| t.get(row, 1).atan2(t.get(row, 0));
    let mut total = 0.0;
    for w in path.windows(2) {
        let mut d = angle(&w[1]) - angle(&w[0]);
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d <= -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        total += d;
    }
    total
}

/// Draws `count` initial states `z₀ ~ N(0, I)` and integrates the teacher.
pub fn generate_dataset(
    spec: &TeacherSpec,
    count: usize,
    task: Task,
    lambda: f64,
    rng: &Rng,
) -> Result<TeacherDataset> {
    spec.validate()?;
    if count < 1 {
        return Err(invalid("count must be >= 1"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("lambda must lie in [0,1], got {lambda}")));
    }
    let (lift, w) = fixed_maps(spec);
    let z0 = rng
        .stream("z0")
        .normal_tensor(&[count, spec.latent_dim], 1.0);
    let fine = integrate(
        |z: &Tensor, t| teacher_field(z, t, spec),
        &z0,
        &spec.reference_solver(),
    )?;
    let fine = fine.into_states();
    let states: Vec<Tensor> = (0..=spec.intervals)
        .map(|k| fine[k * spec.substeps].clone())
        .collect();
    let times = spec.sample_times();
    let derivs = states
        .iter()
        .zip(&times)
        .map(|(z, &t)| teacher_field(z, t, spec))
        .collect::<Result<Vec<_>>>()?;
    let x = z0.matmul(&lift)?.map(f64::tanh);
    let recovered = unlift(&x, &lift)?;
    let err = recovered.max_abs_diff(&z0)?;
    if err > 1e-8 {
        return Err(invalid(format!(
            "observation lift is not invertible on the data (error {err:e})"
        )));
    }
    let last = &states[spec.intervals];
    let mut labels = Vec::with_capacity(count);
    let mut samples = Vec::with_capacity(count);
    for r in 0..count {
        let proj: f64 = last.row_slice(r).iter().zip(&w).map(|(a, b)| a * b).sum();
        let score = match task {
            Task::A => proj,
            Task::B => (1.0 - lambda) * proj + lambda * winding(&fine, r) / spec.horizon,
        };
        let label = usize::from(score > 0.0);
        labels.push(label);
        samples.push(TeacherSample {
            z0: z0.row_slice(r).to_vec(),
            trajectory: states.iter().map(|s| s.row_slice(r).to_vec()).collect(),
            derivatives: derivs.iter().map(|s| s.row_slice(r).to_vec()).collect(),
            x: x.row_slice(r).to_vec(),
            label,
            lambda,
        });
    }
    Ok(TeacherDataset {
        spec: spec.clone(),
        task,
        lambda,
        samples,
        x,
        states,
        derivs,
        labels,
        lift,
    })
}

impl TeacherDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn lift(&self) -> &Tensor {
        &self.lift
    }

    /// Share of label 1.
    pub fn class_balance(&self) -> f64 {
        self.labels.iter().sum::<usize>() as f64 / self.labels.len() as f64
    }

    pub fn select(&self, idx: &[usize]) -> Result<(Tensor, Vec<Tensor>, Vec<Tensor>, Vec<usize>)> {
        let x = self.x.select_rows(idx)?;
        let states = self
            .states
            .iter()
            .map(|s| s.select_rows(idx))
            .collect::<Result<_>>()?;
        let derivs = self
            .derivs
            .iter()
            .map(|s| s.select_rows(idx))
            .collect::<Result<_>>()?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok((x, states, derivs, labels))
    }

    /// One JSON record per sample.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let io = |source| FieldError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for s in &self.samples {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<TeacherSample>> {
        let text = std::fs::read_to_string(path).map_err(|source| FieldError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(FieldError::from))
            .collect()
    }
}
