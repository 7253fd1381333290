use nalgebra::DMatrix;

use crate::error::{invalid, FieldError, Result};
use crate::gradcore::{Rng, Tensor};
use crate::netzoo::FieldModel;

const POWER_ITERS: usize = 4;

fn to_matrix(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    let mut out = Tensor::zeros(&[m.nrows(), m.ncols()]);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

/// Orthonormal basis for the row space of `rows` (returned as rows).
fn orth_rows(rows: &Tensor) -> Tensor {
    let q = to_matrix(rows).transpose().qr().q();
    to_tensor(&q.transpose())
}

/// Top-`k` singular values (descending) of a linear map given only through
/// row-batched products `apply(V) = V Mᵀ` and `adjoint(U) = U M`, where `M`
/// is `[d_out, d_in]`. Randomized subspace iteration with `min(2k, d)` columns.
pub fn randomized_svd(
    d_in: usize,
    d_out: usize,
    k: usize,
    rng: &mut Rng,
    apply: impl Fn(&Tensor) -> Result<Tensor>,
    adjoint: impl Fn(&Tensor) -> Result<Tensor>,
) -> Result<Vec<f64>> {
    let dim = d_in.min(d_out);
    if k == 0 || k > dim {
        return Err(invalid(format!("k = {k} must lie in 1..={dim}")));
    }
    let l = (2 * k).min(dim);
    let omega = rng.normal_tensor(&[l, d_in], 1.0);
    let mut q = orth_rows(&apply(&omega)?);
    for _ in 0..POWER_ITERS {
        let z = orth_rows(&adjoint(&q)?);
        q = orth_rows(&apply(&z)?);
    }
    let b = to_matrix(&adjoint(&q)?);
    let mut s: Vec<f64> = b.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(k);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(FieldError::NonFinite {
            op: "randomized_svd",
        });
    }
    Ok(s)
}

/// Top-`k` singular values of `J_ℓ` at a single input row `x`.
pub fn jacobian_spectrum(
    m: &FieldModel,
    x: &Tensor,
    layer: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if x.rows() != 1 {
        return Err(invalid("jacobian_spectrum takes a single input row"));
    }
    if layer >= m.num_layers() {
        return Err(FieldError::OutOfRange {
            index: layer,
            limit: m.num_layers(),
        });
    }
    let widths = m.widths();
    let h = m.forward(x)?.hidden.swap_remove(layer);
    let tile = |n: usize| -> Result<(Tensor, Tensor)> {
        let xs = Tensor::stack_rows(&vec![x.clone(); n])?;
        let hs = Tensor::stack_rows(&vec![h.clone(); n])?;
        Ok((xs, hs))
    };
    randomized_svd(
        widths[layer],
        widths[layer + 1],
        k,
        rng,
        |v| {
            let (xs, hs) = tile(v.rows())?;
            m.layer_jvp_at(&xs, &hs, layer, v)
        },
        |u| {
            let (xs, hs) = tile(u.rows())?;
            m.layer_vjp_at(&xs, &hs, layer, u)
        },
    )
}

/// Shannon entropy of the singular values normalized to sum one.
pub fn spectral_entropy(svals: &[f64]) -> Result<f64> {
    let total: f64 = svals.iter().sum();
    if svals.is_empty() || total <= 0.0 || svals.iter().any(|v| *v < 0.0) {
        return Err(invalid(
            "spectral entropy needs non-negative values with positive sum",
        ));
    }
    Ok(-svals
        .iter()
        .map(|s| s / total)
        .filter(|p| *p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>())
}

/// 1-D Wasserstein-1 distance between two equal-size spectra.
pub fn jac_wasserstein(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(invalid("spectra must be non-empty and of equal length"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Per-layer spectra of `m` at `x`, plus summary distances: the mean over
/// adjacent layers and (if given) the mean distance to reference spectra.
#[derive(Clone, Debug)]
pub struct SpectralProfile {
    pub spectra: Vec<Vec<f64>>,
    pub entropy: Vec<f64>,
    pub adjacent_wdist: Option<f64>,
}

pub fn spectral_profile(
    m: &FieldModel,
    x: &Tensor,
    k: usize,
    rng: &mut Rng,
) -> Result<SpectralProfile> {
    let spectra = (0..m.num_layers())
        .map(|l| jacobian_spectrum(m, x, l, k, rng))
        .collect::<Result<Vec<_>>>()?;
    let entropy = spectra
        .iter()
        .map(|s| spectral_entropy(s))
        .collect::<Result<Vec<_>>>()?;
    let adjacent_wdist = if spectra.len() >= 2 {
        let ds = spectra
            .windows(2)
            .map(|w| jac_wasserstein(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        Some(ds.iter().sum::<f64>() / ds.len() as f64)
    } else {
        None
    };
    Ok(SpectralProfile {
        spectra,
        entropy,
        adjacent_wdist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wasserstein_hand_case() {
        assert_eq!(jac_wasserstein(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(jac_wasserstein(&[1.0, 3.0], &[3.0, 1.0]).unwrap(), 0.0);
        assert!(jac_wasserstein(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dense_diagonal_spectrum() {
        let m = Tensor::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let s = randomized_svd(
            3,
            3,
            2,
            &mut Rng::new(0),
            |v| v.matmul_nt(&m),
            |u| u.matmul(&m),
        )
        .unwrap();
        assert!((s[0] - 3.0).abs() < 1e-6 && (s[1] - 2.0).abs() < 1e-6);
        assert!(randomized_svd(
            3,
            3,
            4,
            &mut Rng::new(0),
            |v| Ok(v.clone()),
            |u| Ok(u.clone())
        )
        .is_err());
    }

    #[test]
    fn entropy_of_uniform_spectrum() {
        let e = spectral_entropy(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert!((e - 4f64.ln()).abs() < 1e-12);
    }
}
