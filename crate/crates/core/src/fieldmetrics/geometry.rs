use super::Trajectory;
use crate::error::{invalid, Result};

/// Default ε for the curvature, alignment and retention denominators.
pub const EPS: f64 = 1e-8;

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean_over_rows(t: &Trajectory, f: impl Fn(usize) -> f64) -> f64 {
    let rows = t.rows();
    (0..rows).map(f).sum::<f64>() / rows as f64
}

/// `Σ_ℓ ‖z_{ℓ+1} − z_ℓ‖`, averaged over rows.
pub fn path_length(t: &Trajectory) -> f64 {
    mean_over_rows(t, |r| {
        (0..t.steps())
            .map(|l| norm(&diff(t.point(l + 1, r), t.point(l, r))))
            .sum()
    })
}

/// Mean over interior states of `‖z_{ℓ+1} − 2z_ℓ + z_{ℓ−1}‖ / (‖z_{ℓ+1} − z_ℓ‖² + ε)`.
pub fn curvature(t: &Trajectory, eps: f64) -> Result<f64> {
    if t.len() < 3 {
        return Err(invalid("curvature needs at least 3 states"));
    }
    let inner = t.len() - 2;
    Ok(mean_over_rows(t, |r| {
        (1..=inner)
            .map(|l| {
                let next = t.point(l + 1, r);
                let cur = t.point(l, r);
                let prev = t.point(l - 1, r);
                let second: Vec<f64> = (0..next.len())
                    .map(|i| next[i] - 2.0 * cur[i] + prev[i])
                    .collect();
                let step = norm(&diff(next, cur));
                norm(&second) / (step * step + eps)
            })
            .sum::<f64>()
            / inner as f64
    }))
}

/// Mean cosine between consecutive displacements.
pub fn velocity_alignment(t: &Trajectory, eps: f64) -> Result<f64> {
    if t.len() < 3 {
        return Err(invalid("velocity alignment needs at least 3 states"));
    }
    let pairs = t.len() - 2;
    Ok(mean_over_rows(t, |r| {
        (0..pairs)
            .map(|l| {
                let a = diff(t.point(l + 1, r), t.point(l, r));
                let b = diff(t.point(l + 2, r), t.point(l + 1, r));
                dot(&a, &b) / (norm(&a) * norm(&b) + eps)
            })
            .sum::<f64>()
            / pairs as f64
    }))
}

/// Path length over net displacement `‖z_L − z_0‖`, the latter floored at ε.
pub fn norm_path(t: &Trajectory, eps: f64) -> f64 {
    let last = t.len() - 1;
    mean_over_rows(t, |r| {
        let len: f64 = (0..t.steps())
            .map(|l| norm(&diff(t.point(l + 1, r), t.point(l, r))))
            .sum();
        len / norm(&diff(t.point(last, r), t.point(0, r))).max(eps)
    })
}
