use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Max-shifted softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]` for one row, computed as
/// `(max - z[label]) + ln(1 + sum_{i != argmax} exp(z_i - max))`.
pub fn sample_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let top = super::argmax(logits);
    let max = logits[top];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &z)| (z - max).exp())
        .sum();
    ((max - logits[label]) + rest.ln_1p()).max(0.0)
}

pub(crate) fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::input("cross-entropy needs at least two classes"));
    }
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::input(format!(
            "label {l} at position {i} is out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::input(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("cross-entropy of an empty batch"));
    }
    check_labels(labels, logits.cols())?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| sample_cross_entropy(logits.row(r), l))
        .sum();
    let loss = total / labels.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("cross-entropy is not finite".into()));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        Matrix::new(rows, cols, data).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        for label in 0..6 {
            let loss = cross_entropy(&m(1, 6, vec![0.0; 6]), &[label]).unwrap();
            assert!((loss - 6f64.ln()).abs() < 1e-15);
        }
        assert!((6f64.ln() - 1.791759).abs() < 1e-6);
    }

    #[test]
    fn saturated_correct_class_is_zero_loss() {
        let mut row = vec![0.0; 6];
        row[0] = 1000.0;
        let loss = cross_entropy(&m(1, 6, row), &[0]).unwrap();
        assert!(loss <= 1e-12);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let row = vec![1e6, -1e6, 0.0, 5e5, -3.0, 1e6];
        for label in 0..6 {
            let loss = cross_entropy(&m(1, 6, row.clone()), &[label]).unwrap();
            assert!(loss.is_finite() && loss >= 0.0);
        }
        assert!(softmax(&row).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn out_of_range_label_rejected() {
        assert!(matches!(
            cross_entropy(&m(1, 3, vec![0.0; 3]), &[3]),
            Err(Error::Input(_))
        ));
        assert!(cross_entropy(&m(1, 1, vec![0.0]), &[0]).is_err());
    }
}
