use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, FieldError, Result};
use crate::gradcore::{Rng, Tensor};
use crate::netzoo::orthonormal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    /// `(separation, noise, curvature)`.
    pub fn preset(self) -> (f64, f64, f64) {
        match self {
            Difficulty::Easy => (4.0, 0.1, 0.5),
            Difficulty::Medium => (2.5, 0.3, 1.0),
            Difficulty::Hard => (1.5, 0.5, 2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldSpec {
    pub classes: usize,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub curvature: f64,
    pub samples_per_class: usize,
}

impl Default for ManifoldSpec {
    fn default() -> Self {
        ManifoldSpec::preset(Difficulty::Hard, 10, 32, 4, 100)
    }
}

impl ManifoldSpec {
    pub fn preset(
        d: Difficulty,
        classes: usize,
        ambient_dim: usize,
        intrinsic_dim: usize,
        samples_per_class: usize,
    ) -> Self {
        let (separation, noise, curvature) = d.preset();
        ManifoldSpec {
            classes,
            ambient_dim,
            intrinsic_dim,
            separation,
            noise,
            curvature,
            samples_per_class,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(invalid("need at least 2 classes"));
        }
        if self.intrinsic_dim == 0 || self.intrinsic_dim >= self.ambient_dim {
            return Err(invalid("need 0 < intrinsic_dim < ambient_dim"));
        }
        if !(self.noise >= 0.0 && self.separation >= 0.0 && self.curvature.is_finite()) {
            return Err(invalid("noise and separation must be >= 0"));
        }
        Ok(())
    }
}

/// Inputs `[N, D]` with integer labels. `curve` holds each sample's unit
/// curvature displacement `w_c ⊙ sin(V_c τ)` when known.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub curve: Option<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    x: Vec<f64>,
    label: usize,
}

impl LabeledSet {
    pub fn new(x: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(shape_err(
                "LabeledSet",
                format!("{} rows vs {} labels", x.rows(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(FieldError::OutOfRange {
                index: bad,
                limit: classes,
            });
        }
        Ok(LabeledSet {
            x,
            labels,
            classes,
            curve: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Result<LabeledSet> {
        Ok(LabeledSet {
            x: self.x.select_rows(idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            curve: self
                .curve
                .as_ref()
                .map(|c| c.select_rows(idx))
                .transpose()?,
        })
    }

    /// Rows whose label is in `classes`.
    pub fn filter_classes(&self, classes: &[usize]) -> Result<LabeledSet> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.select(&idx)
    }

    /// At most `per_class` seeded picks of each class.
    pub fn low_shot(&self, per_class: usize, rng: &mut Rng) -> Result<LabeledSet> {
        let mut idx = Vec::new();
        for c in 0..self.classes {
            let mut members: Vec<usize> =
                (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            rng.shuffle(&mut members);
            members.truncate(per_class);
            members.sort_unstable();
            idx.extend(members);
        }
        self.select(&idx)
    }

    /// Per-class means `[C, D]`.
    pub fn centroids(&self) -> Tensor {
        let d = self.dim();
        let mut sum = Tensor::zeros(&[self.classes, d]);
        let mut count = vec![0usize; self.classes];
        for (r, &y) in self.labels.iter().enumerate() {
            count[y] += 1;
            for c in 0..d {
                sum.set(y, c, sum.get(y, c) + self.x.get(r, c));
            }
        }
        for (y, n) in count.iter().enumerate() {
            for c in 0..d {
                sum.set(y, c, sum.get(y, c) / (*n).max(1) as f64);
            }
        }
        sum
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let io = |source| FieldError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for (r, &label) in self.labels.iter().enumerate() {
            let rec = Record {
                x: self.x.row_slice(r).to_vec(),
                label,
            };
            serde_json::to_writer(&mut f, &rec)?;
            f.write_all(b"\n").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn read_jsonl(path: &Path, classes: usize) -> Result<LabeledSet> {
        let text = std::fs::read_to_string(path).map_err(|source| FieldError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let recs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<Record>(l).map_err(FieldError::from))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = recs.iter().map(|r| r.x.clone()).collect();
        LabeledSet::new(
            Tensor::from_rows(&rows)?,
            recs.iter().map(|r| r.label).collect(),
            classes,
        )
    }
}

#[derive(Clone, Debug)]
struct ClassParams {
    center: Vec<f64>,
    /// `[D, k]` orthonormal columns.
    tangent: Tensor,
    /// `[D, k]`.
    freq: Tensor,
    weight: Vec<f64>,
}

/// Per-class geometry drawn once; sampling draws fresh `τ` and noise.
#[derive(Clone, Debug)]
pub struct ManifoldGenerator {
    spec: ManifoldSpec,
    params: Vec<ClassParams>,
}

impl ManifoldGenerator {
    pub fn new(spec: &ManifoldSpec, rng: &Rng) -> Result<Self> {
        spec.validate()?;
        let d = spec.ambient_dim;
        let k = spec.intrinsic_dim;
        let params = (0..spec.classes)
            .map(|c| {
                let mut r = rng.substream("class", c as u64);
                let scale = spec.separation / (d as f64).sqrt();
                let center = (0..d).map(|_| scale * r.normal()).collect();
                let tangent = orthonormal(d, k, &mut r);
                let freq = r.normal_tensor(&[d, k], 1.0);
                let weight = (0..d).map(|_| r.normal() / (d as f64).sqrt()).collect();
                ClassParams {
                    center,
                    tangent,
                    freq,
                    weight,
                }
            })
            .collect();
        Ok(ManifoldGenerator {
            spec: spec.clone(),
            params,
        })
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn center(&self, class: usize) -> &[f64] {
        &self.params[class].center
    }

    /// `per_class` samples of every class, grouped by class.
    pub fn sample(&self, per_class: usize, rng: &Rng) -> Result<LabeledSet> {
        let s = &self.spec;
        let (d, k) = (s.ambient_dim, s.intrinsic_dim);
        let n = per_class * s.classes;
        let mut x = Tensor::zeros(&[n, d]);
        let mut curve = Tensor::zeros(&[n, d]);
        let mut labels = Vec::with_capacity(n);
        for (c, p) in self.params.iter().enumerate() {
            let mut r = rng.substream("samples", c as u64);
            for i in 0..per_class {
                let row = c * per_class + i;
                let tau: Vec<f64> = (0..k).map(|_| r.uniform_in(-1.0, 1.0)).collect();
                for j in 0..d {
                    let lin: f64 = (0..k).map(|a| p.tangent.get(j, a) * tau[a]).sum();
                    let phase: f64 = (0..k).map(|a| p.freq.get(j, a) * tau[a]).sum();
                    let bend = p.weight[j] * phase.sin();
                    curve.set(row, j, bend);
                    x.set(
                        row,
                        j,
                        p.center[j] + lin + s.curvature * bend + s.noise * r.normal(),
                    );
                }
                labels.push(c);
            }
        }
        let mut set = LabeledSet::new(x, labels, s.classes)?;
        set.curve = Some(curve);
        Ok(set)
    }
}

/// `spec.samples_per_class` samples per class from a fresh generator.
pub fn generate_manifold(spec: &ManifoldSpec, rng: &Rng) -> Result<LabeledSet> {
    ManifoldGenerator::new(spec, rng)?.sample(spec.samples_per_class, &rng.stream("samples"))
}

/// Test accuracy of a ridge-regularized least-squares one-vs-all linear
/// classifier fit on `train`.
pub fn linear_probe_accuracy(train: &LabeledSet, test: &LabeledSet) -> Result<f64> {
    let (n, d) = (train.len(), train.dim());
    let c = train.classes;
    let design = DMatrix::from_fn(n, d + 1, |r, j| if j < d { train.x.get(r, j) } else { 1.0 });
    let target = DMatrix::from_fn(n, c, |r, j| if train.labels[r] == j { 1.0 } else { 0.0 });
    let gram = design.transpose() * &design + DMatrix::identity(d + 1, d + 1) * 1e-3;
    let rhs = design.transpose() * target;
    let w = gram
        .cholesky()
        .ok_or_else(|| invalid("probe system is not positive definite"))?
        .solve(&rhs);
    let mut correct = 0;
    for r in 0..test.len() {
        let mut best = (0, f64::NEG_INFINITY);
        for j in 0..c {
            let mut s = w[(d, j)];
            for a in 0..d {
                s += test.x.get(r, a) * w[(a, j)];
            }
            if s > best.1 {
                best = (j, s);
            }
        }
        correct += usize::from(best.0 == test.labels[r]);
    }
    Ok(correct as f64 / test.len() as f64)
}
