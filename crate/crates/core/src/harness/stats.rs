//! Improvement percentages, t-based confidence intervals and the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::metrics::{mean, median, sample_std};

/// Relative RMSE reduction in percent: `100 (baseline - augmented) / baseline`.
pub fn improvement(p_baseline: f64, p_aug: f64) -> Result<f64> {
    if !(p_baseline > 0.0 && p_baseline.is_finite()) {
        return Err(Error::invalid(format!(
            "baseline RMSE must be positive, got {p_baseline}"
        )));
    }
    Ok(100.0 * (p_baseline - p_aug) / p_baseline)
}

/// Two-sided Student-t quantile `t_{(1+level)/2, df}`.
pub fn t_critical(level: f64, df: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("confidence level must lie in (0, 1)"));
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(t.inverse_cdf(0.5 * (1.0 + level)))
}

/// Half-width of the t confidence interval for the mean: `t * s / sqrt(n)`.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let t = t_critical(level, (n - 1) as f64)?;
    Ok(t * sample_std(values) / (n as f64).sqrt())
}

/// Two-sided paired t-test p-value. Fewer than two pairs, or pairs that never differ,
/// give 1.0; a constant non-zero difference gives 0.0.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&d);
    let sd = sample_std(&d);
    if sd == 0.0 {
        return Ok(if md == 0.0 { 1.0 } else { 0.0 });
    }
    let t_stat = md / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((2.0 * dist.sf(t_stat.abs())).min(1.0))
}

/// Descriptive summary of one metric across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    /// 95% half-width; absent with fewer than two values.
    pub ci95: Option<f64>,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        Stats {
            n: values.len(),
            mean: mean(values),
            median: median(values),
            std: sample_std(values),
            ci95: confidence_interval(values, 0.95).ok(),
        }
    }
}
