use crate::error::{invalid, shape_err, Result};
use crate::gradcore::Tensor;

pub const ECE_BINS: usize = 15;

/// Expected calibration error over max-softmax confidence with equal-width bins.
pub fn calibration_ece(logits: &Tensor, labels: &[usize], bins: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(invalid("calibration needs at least one sample"));
    }
    if bins == 0 {
        return Err(invalid("bins must be >= 1"));
    }
    if logits.rows() != labels.len() {
        return Err(shape_err(
            "ece",
            format!("{} rows vs {} labels", logits.rows(), labels.len()),
        ));
    }
    let probs = logits.softmax()?;
    let mut conf = vec![0.0; bins];
    let mut acc = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (r, &y) in labels.iter().enumerate() {
        let row = probs.row_slice(r);
        let (pred, p) =
            row.iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                });
        let b = ((p * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        conf[b] += p;
        acc[b] += f64::from(pred == y);
        count[b] += 1;
    }
    let n = labels.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (acc[b] - conf[b]).abs() / n)
        .sum())
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(shape_err(
            "accuracy",
            "logits and labels must be non-empty and aligned",
        ));
    }
    let hits = logits
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_correct_is_calibrated() {
        let logits = Tensor::from_rows(&[vec![50.0, 0.0], vec![0.0, 50.0]]).unwrap();
        assert!(calibration_ece(&logits, &[0, 1], ECE_BINS).unwrap() < 1e-12);
        assert!(calibration_ece(&Tensor::zeros(&[0, 2]), &[], ECE_BINS).is_err());
    }

    #[test]
    fn uniform_binary_logits() {
        let logits = Tensor::zeros(&[4, 2]);
        let ece = calibration_ece(&logits, &[0, 1, 0, 0], ECE_BINS).unwrap();
        // argmax ties resolve to class 0, accuracy 0.75, confidence 0.5
        assert!((ece - 0.25).abs() < 1e-12);
    }
}
