//! Two-objective gradient combiners.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = (norm_sq(a) * norm_sq(b)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        (dot(a, b) / d).clamp(-1.0, 1.0)
    }
}

/// Plain sum `g_task + g_field`.
pub fn sum_combine(g_task: &[f64], g_field: &[f64]) -> Vec<f64> {
    g_task.iter().zip(g_field).map(|(a, b)| a + b).collect()
}

/// PCGrad: when the gradients conflict, each is projected off the other's
/// direction before summing.
pub fn pcgrad_combine(g_task: &[f64], g_field: &[f64]) -> Vec<f64> {
    let d = dot(g_task, g_field);
    if d >= 0.0 {
        return sum_combine(g_task, g_field);
    }
    let nt = norm_sq(g_task);
    let nf = norm_sq(g_field);
    g_task
        .iter()
        .zip(g_field)
        .map(|(&t, &f)| (t - d / nf * f) + (f - d / nt * t))
        .collect()
}

/// Weight on `g_task` of the min-norm convex combination.
pub fn mgda_weight(g_task: &[f64], g_field: &[f64]) -> f64 {
    let diff: Vec<f64> = g_field.iter().zip(g_task).map(|(f, t)| f - t).collect();
    let den = norm_sq(&diff);
    if den == 0.0 {
        return 1.0;
    }
    (dot(&diff, g_field) / den).clamp(0.0, 1.0)
}

/// MGDA for two objectives: `w·g_task + (1−w)·g_field` of minimum norm.
/// An inactive (all-zero) field gradient leaves plain task descent.
pub fn mgda_combine(g_task: &[f64], g_field: &[f64]) -> Vec<f64> {
    if norm_sq(g_field) == 0.0 {
        return g_task.to_vec();
    }
    let w = mgda_weight(g_task, g_field);
    g_task
        .iter()
        .zip(g_field)
        .map(|(t, f)| w * t + (1.0 - w) * f)
        .collect()
}

/// Removes the component of `g_task` that would increase the field loss.
pub fn projected_task_step(g_task: &[f64], g_field: &[f64]) -> Vec<f64> {
    let nf = norm_sq(g_field);
    if nf == 0.0 {
        return g_task.to_vec();
    }
    let d = dot(g_task, g_field);
    if d >= 0.0 {
        return g_task.to_vec();
    }
    let out: Vec<f64> = g_task
        .iter()
        .zip(g_field)
        .map(|(t, f)| t - d / nf * f)
        .collect();
    // Rounding can leave a tiny negative overlap; take one more pass.
    let d2 = dot(&out, g_field);
    if d2 < 0.0 {
        return out
            .iter()
            .zip(g_field)
            .map(|(t, f)| t - d2 / nf * f)
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_pcgrad_is_sum() {
        assert_eq!(pcgrad_combine(&[1.0, 0.0], &[0.0, 2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn opposite_pcgrad_cancels() {
        let g = [0.3, -1.2, 2.0];
        let f: Vec<f64> = g.iter().map(|v| -v).collect();
        assert!(pcgrad_combine(&g, &f).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mgda_degenerate_cases() {
        let g = [1.0, 2.0];
        assert_eq!(mgda_combine(&g, &g), g.to_vec());
        assert_eq!(mgda_combine(&g, &[0.0, 0.0]), g.to_vec());
    }

    #[test]
    fn projection_cases() {
        assert_eq!(
            projected_task_step(&[1.0, 1.0], &[1.0, 0.0]),
            vec![1.0, 1.0]
        );
        let p = projected_task_step(&[1.0, -2.0], &[-1.0, 2.0]);
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cosine_of_zero_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
