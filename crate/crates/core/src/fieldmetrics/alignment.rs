use nalgebra::DMatrix;

use super::Trajectory;
use crate::error::{invalid, shape_err, Result};

/// Resamples a single-row trajectory to `n` points by linear interpolation
/// in the normalized layer index.
pub fn resample(t: &Trajectory, n: usize) -> Result<DMatrix<f64>> {
    if t.rows() != 1 {
        return Err(invalid("resampling takes a single-row trajectory"));
    }
    if n < 2 {
        return Err(invalid("need at least 2 resampled points"));
    }
    let d = t.dim();
    let last = (t.len() - 1) as f64;
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let pos = if t.len() == 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64 * last
        };
        let lo = (pos.floor() as usize).min(t.len() - 1);
        let hi = (lo + 1).min(t.len() - 1);
        let w = pos - lo as f64;
        let (a, b) = (t.point(lo, 0), t.point(hi, 0));
        for j in 0..d {
            out[(i, j)] = (1.0 - w) * a[j] + w * b[j];
        }
    }
    Ok(out)
}

/// `min_{Q orthogonal, s} ‖s·A·Q − B‖_F / ‖B‖_F` after resampling both
/// trajectories to the longer length.
pub fn procrustes_error(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(shape_err(
            "procrustes",
            format!("dims {} vs {}", a.dim(), b.dim()),
        ));
    }
    let n = a.len().max(b.len()).max(2);
    let ma = resample(a, n)?;
    let mb = resample(b, n)?;
    let nb2 = mb.norm_squared();
    if nb2 == 0.0 {
        return Err(invalid("reference trajectory is identically zero"));
    }
    let na2 = ma.norm_squared();
    if na2 == 0.0 {
        return Ok(1.0);
    }
    let trace: f64 = (ma.transpose() * &mb).singular_values().iter().sum();
    let resid = (nb2 - trace * trace / na2).max(0.0);
    Ok((resid / nb2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_copy_aligns_exactly() {
        let pts = vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![0.5, 3.0]];
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| vec![2.0 * (c * p[0] - s * p[1]), 2.0 * (s * p[0] + c * p[1])])
            .collect();
        let a = Trajectory::from_points(&pts).unwrap();
        let b = Trajectory::from_points(&rot).unwrap();
        assert!(procrustes_error(&a, &b).unwrap() < 1e-8);
        assert!(procrustes_error(&a, &a).unwrap() < 1e-8);
    }
}
