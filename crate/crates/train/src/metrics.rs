//! Regression and classification scores used by the evaluation reports.

use crate::error::{Result, TrainError};

fn check_lengths(y: &[f64], y_hat: &[f64], min: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(TrainError::param(format!("length mismatch: {} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.len() < min {
        return Err(TrainError::param(format!("need at least {min} values, got {}", y.len())));
    }
    Ok(())
}

/// Coefficient of determination, 1 − SS_res / SS_tot.
pub fn r_squared(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 2)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(TrainError::data("R² is undefined for constant targets"));
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `counts[i][j]` = number of samples with true class `i` predicted as `j`.
pub fn confusion(y: &[usize], y_hat: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    if y.len() != y_hat.len() {
        return Err(TrainError::param(format!("length mismatch: {} labels vs {} predictions", y.len(), y_hat.len())));
    }
    let mut counts = vec![vec![0; num_classes]; num_classes];
    for (&t, &p) in y.iter().zip(y_hat) {
        if t >= num_classes || p >= num_classes {
            return Err(TrainError::param(format!("class label ({t}, {p}) outside 0..{num_classes}")));
        }
        counts[t][p] += 1;
    }
    Ok(counts)
}

pub fn accuracy(y: &[usize], y_hat: &[usize]) -> Result<f64> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(TrainError::param("accuracy needs equal, non-empty label vectors"));
    }
    Ok(y.iter().zip(y_hat).filter(|(a, b)| a == b).count() as f64 / y.len() as f64)
}

/// trace / total; `None` for an empty matrix.
pub fn accuracy_from_confusion(counts: &[Vec<usize>]) -> Option<f64> {
    let total: usize = counts.iter().flatten().sum();
    let hits: usize = counts.iter().enumerate().map(|(i, row)| row[i]).sum();
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Share of misclassifications that land on a neighbouring class.
/// `None` when there are no errors.
pub fn adjacent_error_fraction(counts: &[Vec<usize>]) -> Option<f64> {
    let mut errors = 0;
    let mut adjacent = 0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i != j {
                errors += c;
                if i.abs_diff(j) == 1 {
                    adjacent += c;
                }
            }
        }
    }
    (errors > 0).then(|| adjacent as f64 / errors as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_hand_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert_eq!(r_squared(&y, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r_squared(&y, &[1.0, 2.0, 4.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(r_squared(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(r_squared(&[1.0], &[1.0]).is_err());
        assert!(r_squared(&y, &[1.0]).is_err());
    }

    #[test]
    fn error_hand_examples() {
        assert_eq!(mse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.0], &[3.0]).unwrap(), 9.0);
        assert_eq!(mae(&[0.0], &[3.0]).unwrap(), 3.0);
        assert_eq!(mse(&[0.4, 0.2], &[0.4, 0.2]).unwrap(), 0.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn confusion_hand_examples() {
        assert_eq!(confusion(&[0, 1], &[1, 1], 2).unwrap(), vec![vec![0, 1], vec![0, 1]]);
        let perfect = confusion(&[0, 2, 1, 2], &[0, 2, 1, 2], 3).unwrap();
        assert_eq!(perfect, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        assert!(confusion(&[3], &[0], 3).is_err());
        assert!(confusion(&[0], &[0, 1], 3).is_err());
    }

    #[test]
    fn adjacent_errors() {
        let m = vec![vec![5, 1, 0], vec![0, 4, 0], vec![1, 2, 3]];
        assert!((adjacent_error_fraction(&m).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(adjacent_error_fraction(&[vec![2, 0], vec![0, 1]]), None);
        assert_eq!(accuracy_from_confusion(&m), Some(12.0 / 16.0));
    }
}
