//! Error metrics and small descriptive statistics.

use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Root-mean-squared error.
pub fn rmse(predictions: ArrayView1<f64>, targets: ArrayView1<f64>) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::NoRows);
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / targets.len() as f64).sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rmse_examples() {
        let t = array![1.0, 2.0, 3.0];
        assert_eq!(rmse(t.view(), t.view()).unwrap(), 0.0);
        let r = rmse(array![1.0, 3.0].view(), array![1.0, 1.0].view()).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-15);
        let shifted = t.mapv(|v| v - 0.75);
        assert!((rmse(shifted.view(), t.view()).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rmse_errors() {
        let empty = ndarray::Array1::<f64>::zeros(0);
        assert!(matches!(rmse(empty.view(), empty.view()), Err(Error::NoRows)));
        assert!(matches!(
            rmse(array![1.0].view(), array![1.0, 2.0].view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn descriptive() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(sample_std(&[5.0]), 0.0);
        assert!((sample_std(&[1.0, 3.0]) - std::f64::consts::SQRT_2).abs() < 1e-15);
    }
}
