use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

/// Largest sample size for which the Spearman p-value is computed by
/// enumerating all permutations.
pub const EXACT_SPEARMAN_MAX_N: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid(
            "pearson needs two equal-length series of at least 2 points",
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(invalid("correlation of a constant series is undefined"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(&ranks(xs), &ranks(ys))
}

/// Two-sided p-value of `r` under the t approximation with `n − 2` dof.
pub fn t_test_p(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let dof = (n - 2) as f64;
    let t = r * (dof / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Exact two-sided permutation p-value for Spearman's ρ.
fn spearman_exact_p(xs: &[f64], ys: &[f64], rho: f64) -> Result<f64> {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut permuted = vec![0.0; n];
    let tol = 1e-12;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut visit = |perm: &[usize], hits: &mut usize, total: &mut usize| -> Result<()> {
        for (slot, &p) in permuted.iter_mut().zip(perm) {
            *slot = ry[p];
        }
        let r = pearson(&rx, &permuted)?;
        if r.abs() >= rho.abs() - tol {
            *hits += 1;
        }
        *total += 1;
        Ok(())
    };
    visit(&perm, &mut hits, &mut total)?;
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm, &mut hits, &mut total)?;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Pearson and Spearman correlations with two-sided p-values.
pub fn correlations(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(invalid("series lengths differ"));
    }
    if xs.len() < 3 {
        return Err(invalid("correlations need at least 3 points"));
    }
    let n = xs.len();
    let r = pearson(xs, ys)?;
    let rho = spearman(xs, ys)?;
    let spearman_p = if n <= EXACT_SPEARMAN_MAX_N {
        spearman_exact_p(xs, ys, rho)?
    } else {
        t_test_p(rho, n)
    };
    Ok(Correlation {
        n,
        pearson_r: r,
        pearson_p: t_test_p(r, n),
        spearman_rho: rho,
        spearman_p,
    })
}

/// Median and interquartile range (linear interpolation between order statistics).
pub fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Some((q(0.5), q(0.75) - q(0.25)))
}
