//! Synthetic regression problems with a known ground truth.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

const FEATURE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5` over ten uniform features.
    Friedman1,
    /// Dot product with `coefficients`; one uniform feature per coefficient.
    Linear { coefficients: Vec<f64> },
    /// Continuous broken line in one uniform feature, kinked at `breakpoint`.
    Piecewise {
        breakpoint: f64,
        left_slope: f64,
        right_slope: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub n_rows: usize,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn friedman1(n_rows: usize, noise_sd: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Friedman1,
            n_rows,
            noise_sd,
            seed,
        }
    }

    pub fn linear(coefficients: Vec<f64>, n_rows: usize, noise_sd: f64, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Linear { coefficients },
            n_rows,
            noise_sd,
            seed,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GeneratorKind::Friedman1 => "friedman1",
            GeneratorKind::Linear { .. } => "linear",
            GeneratorKind::Piecewise { .. } => "piecewise",
        }
    }

    pub fn n_features(&self) -> usize {
        match &self.kind {
            GeneratorKind::Friedman1 => 10,
            GeneratorKind::Linear { coefficients } => coefficients.len(),
            GeneratorKind::Piecewise { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::invalid("generator n_rows must be at least 1"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(
                "generator noise_sd must be a finite non-negative number",
            ));
        }
        match &self.kind {
            GeneratorKind::Linear { coefficients } if coefficients.is_empty() => {
                Err(Error::invalid("linear generator needs at least one coefficient"))
            }
            GeneratorKind::Linear { coefficients } if coefficients.iter().any(|c| !c.is_finite()) => {
                Err(Error::invalid("linear coefficients must be finite"))
            }
            GeneratorKind::Piecewise {
                breakpoint,
                left_slope,
                right_slope,
            } if ![breakpoint, left_slope, right_slope].iter().all(|v| v.is_finite()) => {
                Err(Error::invalid("piecewise parameters must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Noise-free target for one feature row.
    pub fn truth(&self, x: ArrayView1<f64>) -> f64 {
        match &self.kind {
            GeneratorKind::Friedman1 => {
                10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
            }
            GeneratorKind::Linear { coefficients } => coefficients.iter().zip(x.iter()).map(|(c, v)| c * v).sum(),
            GeneratorKind::Piecewise {
                breakpoint,
                left_slope,
                right_slope,
            } => {
                let d = x[0] - breakpoint;
                if d < 0.0 {
                    left_slope * d
                } else {
                    right_slope * d
                }
            }
        }
    }
}

/// Features are uniform on `[0, 1]`; features and noise use separate streams, so the
/// feature matrix does not depend on `noise_sd`.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let p = spec.n_features();
    let mut feature_rng = rng_from_seed(derive_seed(spec.seed, FEATURE_STREAM));
    let mut noise_rng = rng_from_seed(derive_seed(spec.seed, NOISE_STREAM));
    let features = Array2::from_shape_simple_fn((spec.n_rows, p), || feature_rng.random::<f64>());
    let target: Array1<f64> = features
        .rows()
        .into_iter()
        .map(|row| {
            let eps: f64 = noise_rng.sample(StandardNormal);
            spec.truth(row) + spec.noise_sd * eps
        })
        .collect();
    Dataset::from_arrays(features, target)
}
