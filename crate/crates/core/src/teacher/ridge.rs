//! Ridge regression on standardized features.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    pub standardizer: Standardizer,
    /// Coefficients on the standardized features.
    pub coefficients: Array1<f64>,
    pub intercept: f64,
}

/// Minimizes `||y - b - Z w||^2 + lambda ||w||^2` where `Z` are the standardized
/// features; the intercept `b` is the target mean and is not penalized.
pub fn ridge_fit(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<RidgeModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    if x.nrows() == 0 {
        return Err(Error::NoRows);
    }
    let standardizer = Standardizer::fit_matrix(x)?;
    let z = standardizer.transform(x)?;
    let intercept = y.sum() / y.len() as f64;
    let centered = y.mapv(|v| v - intercept);

    let mut gram = z.t().dot(&z);
    for i in 0..gram.nrows() {
        gram[[i, i]] += lambda;
    }
    let rhs = z.t().dot(&centered);
    let coefficients = cholesky_solve(gram, rhs)?;
    Ok(RidgeModel {
        lambda,
        standardizer,
        coefficients,
        intercept,
    })
}

impl RidgeModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let z = self.standardizer.transform(x)?;
        Ok(z.dot(&self.coefficients) + self.intercept)
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
fn cholesky_solve(mut a: Array2<f64>, b: Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::invalid("ridge system is not positive definite"));
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    // forward: L u = b
    let mut u = b;
    for i in 0..n {
        let mut s = u[i];
        for k in 0..i {
            s -= a[[i, k]] * u[k];
        }
        u[i] = s / a[[i, i]];
    }
    // backward: L^T x = u
    for i in (0..n).rev() {
        let mut s = u[i];
        for k in (i + 1)..n {
            s -= a[[k, i]] * u[k];
        }
        u[i] = s / a[[i, i]];
    }
    Ok(u)
}
