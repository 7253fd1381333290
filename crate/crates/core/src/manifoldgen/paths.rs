use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, FieldError, Result};
use crate::gradcore::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    CenterOut,
    Sequential,
    Random,
    Frequency,
}

impl PathKind {
    pub fn name(self) -> &'static str {
        match self {
            PathKind::CenterOut => "center-out",
            PathKind::Sequential => "sequential",
            PathKind::Random => "random",
            PathKind::Frequency => "frequency",
        }
    }
}

/// What the blocks index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Coordinate,
    /// Orthonormal DCT-II coefficients; revealed views are mapped back.
    Dct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevealPath {
    pub id: String,
    pub kind: PathKind,
    pub domain: Domain,
    pub dim: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl RevealPath {
    pub fn steps(&self) -> usize {
        self.blocks.len()
    }

    /// 0/1 mask of blocks `1..=r`.
    pub fn mask(&self, r: usize) -> Result<Vec<f64>> {
        if r == 0 || r > self.steps() {
            return Err(invalid(format!(
                "reveal step must lie in 1..={}, got {r}",
                self.steps()
            )));
        }
        let mut m = vec![0.0; self.dim];
        for block in &self.blocks[..r] {
            for &i in block {
                m[i] = 1.0;
            }
        }
        Ok(m)
    }
}

/// Orthonormal DCT-II matrix; row `k` is basis function `k`.
pub fn dct_matrix(n: usize) -> Tensor {
    let mut c = Tensor::zeros(&[n, n]);
    for k in 0..n {
        let s = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            let v = s * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
            c.set(k, i, v);
        }
    }
    c
}

fn chunk(order: &[usize], r: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    (0..r)
        .map(|b| order[b * n / r..(b + 1) * n / r].to_vec())
        .collect()
}

/// One path per kind, each with `steps` blocks. The frequency path orders
/// DCT coefficients by the magnitude of `train_mean`'s transform.
pub fn build_paths(
    dim: usize,
    kinds: &[PathKind],
    steps: usize,
    rng: &Rng,
    train_mean: Option<&[f64]>,
) -> Result<Vec<RevealPath>> {
    if steps < 2 || steps > dim {
        return Err(invalid(format!("need 2 <= steps <= {dim}, got {steps}")));
    }
    let mut out = Vec::with_capacity(kinds.len());
    for (i, &kind) in kinds.iter().enumerate() {
        let (order, domain) = match kind {
            PathKind::Sequential => ((0..dim).collect(), Domain::Coordinate),
            PathKind::CenterOut => {
                let mid = (dim as f64 - 1.0) / 2.0;
                let mut o: Vec<usize> = (0..dim).collect();
                o.sort_by(|&a, &b| {
                    (a as f64 - mid)
                        .abs()
                        .total_cmp(&(b as f64 - mid).abs())
                        .then(a.cmp(&b))
                });
                (o, Domain::Coordinate)
            }
            PathKind::Random => (
                rng.substream("path", i as u64).permutation(dim),
                Domain::Coordinate,
            ),
            PathKind::Frequency => {
                let mean =
                    train_mean.ok_or_else(|| invalid("frequency path needs the train mean"))?;
                if mean.len() != dim {
                    return Err(shape_err(
                        "build_paths",
                        format!("mean has {} entries", mean.len()),
                    ));
                }
                let coef = Tensor::row(mean).matmul_nt(&dct_matrix(dim))?;
                let mut o: Vec<usize> = (0..dim).collect();
                o.sort_by(|&a, &b| {
                    coef.data()[b]
                        .abs()
                        .total_cmp(&coef.data()[a].abs())
                        .then(a.cmp(&b))
                });
                (o, Domain::Dct)
            }
        };
        out.push(RevealPath {
            id: format!("{}-{}", kind.name(), i),
            kind,
            domain,
            dim,
            blocks: chunk(&order, steps),
        });
    }
    Ok(out)
}

/// Step-`r` view `[rows, 2D]`: revealed values (zeros elsewhere) followed by
/// the mask.
pub fn reveal(x: &Tensor, path: &RevealPath, r: usize) -> Result<Tensor> {
    if x.cols() != path.dim {
        return Err(shape_err(
            "reveal",
            format!("input {:?}, path dim {}", x.shape(), path.dim),
        ));
    }
    let mask = path.mask(r)?;
    let masked = match path.domain {
        Domain::Coordinate => {
            let mut m = x.clone();
            for row in 0..x.rows() {
                for (c, keep) in mask.iter().enumerate() {
                    if *keep == 0.0 {
                        m.set(row, c, 0.0);
                    }
                }
            }
            m
        }
        Domain::Dct => {
            let basis = dct_matrix(path.dim);
            let mut coef = x.matmul_nt(&basis)?;
            for row in 0..x.rows() {
                for (c, keep) in mask.iter().enumerate() {
                    if *keep == 0.0 {
                        coef.set(row, c, 0.0);
                    }
                }
            }
            coef.matmul(&basis)?
        }
    };
    let mut mt = Tensor::zeros(&[x.rows(), path.dim]);
    for row in 0..x.rows() {
        for (c, v) in mask.iter().enumerate() {
            mt.set(row, c, *v);
        }
    }
    masked.concat_cols(&mt)
}

/// All reveal steps concatenated `[rows, R·2D]`, the driven-model input.
pub fn reveal_schedule(x: &Tensor, path: &RevealPath) -> Result<Tensor> {
    let mut out = reveal(x, path, 1)?;
    for r in 2..=path.steps() {
        out = out.concat_cols(&reveal(x, path, r)?)?;
    }
    Ok(out)
}

/// JSON manifest keyed by path id.
pub fn write_path_manifest(path: &Path, paths: &[RevealPath]) -> Result<()> {
    let map: BTreeMap<&str, &RevealPath> = paths.iter().map(|p| (p.id.as_str(), p)).collect();
    let text = serde_json::to_string_pretty(&map)?;
    std::fs::write(path, text).map_err(|source| FieldError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_path_manifest(path: &Path) -> Result<Vec<RevealPath>> {
    let text = std::fs::read_to_string(path).map_err(|source| FieldError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let map: BTreeMap<String, RevealPath> = serde_json::from_str(&text)?;
    Ok(map.into_values().collect())
}
