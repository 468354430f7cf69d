//! Synthetic-row generators.
//!
//! * `teacher_noise`: resample training rows with replacement, perturb every feature
//!   with Gaussian noise of standard deviation `eta * sigma_c`, and label the result
//!   with the teacher model.
//! * `naive_noise`: the same perturbed rows, keeping each source row's label.
//! * `mixup`: convex combinations of two uniformly drawn rows, `lambda ~ Beta(a, a)`.
//! * `cmixup`: mixup whose partner is drawn with a Gaussian kernel on label distance.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnStats, Dataset};
use crate::error::{Error, Result};
use crate::metrics::sample_std;
use crate::rng::{rng_from_seed, Rng};
use crate::teacher::{teacher_predict, TrainedTeacher};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TeacherNoise,
    NaiveNoise,
    Mixup,
    Cmixup,
    None,
    /// Student trained on teacher-relabelled training rows only; a control, not a generator.
    DistillOnly,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::TeacherNoise => "teacher_noise",
            Strategy::NaiveNoise => "naive_noise",
            Strategy::Mixup => "mixup",
            Strategy::Cmixup => "cmixup",
            Strategy::None => "none",
            Strategy::DistillOnly => "distill_only",
        }
    }

    pub fn needs_teacher(self) -> bool {
        matches!(self, Strategy::TeacherNoise | Strategy::DistillOnly)
    }

    /// Whether the strategy's result depends on the volume and noise settings.
    pub fn uses_synthetic_rows(self) -> bool {
        !matches!(self, Strategy::None | Strategy::DistillOnly)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "teacher_noise" => Strategy::TeacherNoise,
            "naive_noise" => Strategy::NaiveNoise,
            "mixup" => Strategy::Mixup,
            "cmixup" => Strategy::Cmixup,
            "none" => Strategy::None,
            "distill_only" => Strategy::DistillOnly,
            other => return Err(Error::invalid(format!("unknown strategy `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCenter {
    /// Noise has mean zero.
    #[default]
    ZeroMean,
    /// Noise has mean `mu_c`, shifting every perturbed cell by its column mean.
    ColumnMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub strategy: Strategy,
    pub volume: usize,
    pub eta: f64,
    #[serde(default)]
    pub noise_center: NoiseCenter,
    #[serde(default = "default_alpha")]
    pub mixup_alpha: f64,
    /// Defaults to the sample standard deviation of the training target.
    #[serde(default)]
    pub cmixup_bandwidth: Option<f64>,
    /// Fixes the mixing coefficient instead of drawing it from the Beta distribution.
    #[serde(default)]
    pub fixed_lambda: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    1.0
}

pub const DEFAULT_VOLUME: usize = 10_000;
pub const DEFAULT_ETA: f64 = 0.05;

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            strategy: Strategy::TeacherNoise,
            volume: DEFAULT_VOLUME,
            eta: DEFAULT_ETA,
            noise_center: NoiseCenter::ZeroMean,
            mixup_alpha: default_alpha(),
            cmixup_bandwidth: None,
            fixed_lambda: None,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn new(strategy: Strategy, volume: usize, eta: f64, seed: u64) -> Self {
        AugmentationConfig {
            strategy,
            volume,
            eta,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be non-negative, got {}", self.eta)));
        }
        if self.mixup_alpha.is_nan() || self.mixup_alpha <= 0.0 {
            return Err(Error::invalid("mixup_alpha must be positive"));
        }
        if let Some(h) = self.cmixup_bandwidth {
            if h.is_nan() || h <= 0.0 {
                return Err(Error::invalid("cmixup_bandwidth must be positive"));
            }
        }
        if let Some(l) = self.fixed_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::invalid("fixed_lambda must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    /// Perturbed copy of a training row.
    Perturbed { source: usize },
    /// `lambda * row(first) + (1 - lambda) * row(second)`.
    Mixed { first: usize, second: usize, lambda: f64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Perturbed { source } => write!(f, "{source}"),
            Provenance::Mixed { first, second, lambda } => write!(f, "{first};{second};{lambda}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
    pub provenance: Vec<Provenance>,
}

impl SyntheticSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `volume` rows with replacement and perturbs each cell. Returns the
/// perturbed matrix and the source indices.
fn perturb(train: &Dataset, stats: &ColumnStats, config: &AugmentationConfig) -> Result<(Array2<f64>, Vec<usize>)> {
    config.validate()?;
    let p = train.n_features();
    if stats.n_features() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: stats.n_features(),
        });
    }
    let n = train.n_rows();
    if n == 0 && config.volume > 0 {
        return Err(Error::NoRows);
    }
    let centers: Vec<f64> = match config.noise_center {
        NoiseCenter::ZeroMean => vec![0.0; p],
        NoiseCenter::ColumnMean => stats.means.clone(),
    };
    let sds: Vec<f64> = stats.stds.iter().map(|s| config.eta * s).collect();
    let mut rng = rng_from_seed(config.seed);
    let x = train.features();
    let mut out = Array2::zeros((config.volume, p));
    let mut sources = Vec::with_capacity(config.volume);
    for mut row in out.rows_mut() {
        let src = rng.random_range(0..n);
        sources.push(src);
        for (c, cell) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *cell = x[[src, c]] + (centers[c] + sds[c] * z);
        }
    }
    Ok((out, sources))
}

/// Perturbed resampled rows labelled by the teacher.
pub fn generate_teacher_noise(
    train: &Dataset,
    stats: &ColumnStats,
    config: &AugmentationConfig,
    teacher: &TrainedTeacher,
) -> Result<SyntheticSet> {
    if teacher.n_features != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            found: teacher.n_features,
        });
    }
    let (features, sources) = perturb(train, stats, config)?;
    let labels = if features.nrows() == 0 {
        Array1::zeros(0)
    } else {
        teacher_predict(teacher, features.view())?
    };
    Ok(SyntheticSet {
        features,
        labels,
        provenance: sources
            .into_iter()
            .map(|source| Provenance::Perturbed { source })
            .collect(),
    })
}

/// Perturbed resampled rows that keep their source labels.
pub fn generate_naive_noise(train: &Dataset, stats: &ColumnStats, config: &AugmentationConfig) -> Result<SyntheticSet> {
    let (features, sources) = perturb(train, stats, config)?;
    let labels = sources.iter().map(|&s| train.target()[s]).collect();
    Ok(SyntheticSet {
        features,
        labels,
        provenance: sources
            .into_iter()
            .map(|source| Provenance::Perturbed { source })
            .collect(),
    })
}

fn lambda_sampler(config: &AugmentationConfig) -> Result<impl FnMut(&mut Rng) -> f64> {
    let beta = Beta::new(config.mixup_alpha, config.mixup_alpha).map_err(|e| Error::invalid(e.to_string()))?;
    let fixed = config.fixed_lambda;
    Ok(move |rng: &mut Rng| fixed.unwrap_or_else(|| beta.sample(rng)))
}

fn mix(train: &Dataset, pairs: &[(usize, usize, f64)]) -> SyntheticSet {
    let x = train.features();
    let y = train.target();
    let mut features = Array2::zeros((pairs.len(), train.n_features()));
    let mut labels = Array1::zeros(pairs.len());
    for (r, &(i, j, lambda)) in pairs.iter().enumerate() {
        let mut row = features.row_mut(r);
        for c in 0..x.ncols() {
            row[c] = lambda * x[[i, c]] + (1.0 - lambda) * x[[j, c]];
        }
        labels[r] = lambda * y[i] + (1.0 - lambda) * y[j];
    }
    let provenance = pairs
        .iter()
        .map(|&(first, second, lambda)| Provenance::Mixed { first, second, lambda })
        .collect();
    SyntheticSet {
        features,
        labels,
        provenance,
    }
}

/// Mixup: both rows uniform (possibly equal), `lambda ~ Beta(alpha, alpha)`.
pub fn generate_mixup(train: &Dataset, config: &AugmentationConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let mut rng = rng_from_seed(config.seed);
    let mut lambda = lambda_sampler(config)?;
    let pairs: Vec<_> = (0..config.volume)
        .map(|_| {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            (i, j, lambda(&mut rng))
        })
        .collect();
    Ok(mix(train, &pairs))
}

/// Partner probabilities for anchor `anchor`: proportional to
/// `exp(-(y_anchor - y_j)^2 / (2 h^2))` over `j != anchor`. Computed relative to the
/// closest label so the weights cannot all underflow.
pub fn cmixup_partner_weights(labels: &[f64], anchor: usize, bandwidth: f64) -> Vec<f64> {
    let ya = labels[anchor];
    let d2: Vec<f64> = labels.iter().map(|y| (y - ya) * (y - ya)).collect();
    let closest = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != anchor)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let denom = 2.0 * bandwidth * bandwidth;
    let mut w: Vec<f64> = d2
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            if j == anchor {
                0.0
            } else {
                (-(d - closest) / denom).exp()
            }
        })
        .collect();
    if w.iter().any(|v| !v.is_finite()) {
        // bandwidth so large that the kernel is flat
        for (j, v) in w.iter_mut().enumerate() {
            *v = if j == anchor { 0.0 } else { 1.0 };
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn resolve_bandwidth(train: &Dataset, config: &AugmentationConfig) -> f64 {
    config.cmixup_bandwidth.unwrap_or_else(|| {
        let sd = sample_std(train.target().as_slice().expect("contiguous target"));
        if sd > 0.0 {
            sd
        } else {
            1.0
        }
    })
}

/// C-Mixup: anchor uniform, partner `j != i` drawn with a Gaussian kernel on label distance.
pub fn generate_cmixup(train: &Dataset, config: &AugmentationConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let bandwidth = resolve_bandwidth(train, config);
    let labels = train.target().to_vec();
    let mut rng = rng_from_seed(config.seed);
    let mut lambda = lambda_sampler(config)?;
    let pairs: Vec<_> = (0..config.volume)
        .map(|_| {
            let i = rng.random_range(0..n);
            let w = cmixup_partner_weights(&labels, i, bandwidth);
            let j = sample_index(&w, rng.random::<f64>(), i);
            (i, j, lambda(&mut rng))
        })
        .collect();
    Ok(mix(train, &pairs))
}

/// Inverse-CDF draw from normalized weights; `fallback` if rounding leaves `u` uncovered.
fn sample_index(weights: &[f64], u: f64, exclude: usize) -> usize {
    let mut acc = 0.0;
    let mut last = None;
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(j);
        if u < acc {
            return j;
        }
    }
    last.unwrap_or(if exclude == 0 { 1 } else { 0 })
}

/// Dispatches on `config.strategy`. `None` produces an empty set; `DistillOnly` is not
/// a generator and is rejected.
pub fn generate(
    train: &Dataset,
    stats: &ColumnStats,
    config: &AugmentationConfig,
    teacher: Option<&TrainedTeacher>,
) -> Result<SyntheticSet> {
    match config.strategy {
        Strategy::TeacherNoise => {
            let teacher = teacher.ok_or(Error::NotFitted)?;
            generate_teacher_noise(train, stats, config, teacher)
        }
        Strategy::NaiveNoise => generate_naive_noise(train, stats, config),
        Strategy::Mixup => generate_mixup(train, config),
        Strategy::Cmixup => generate_cmixup(train, config),
        Strategy::None => Ok(SyntheticSet {
            features: Array2::zeros((0, train.n_features())),
            labels: Array1::zeros(0),
            provenance: vec![],
        }),
        Strategy::DistillOnly => Err(Error::invalid("distill_only does not generate synthetic rows")),
    }
}

/// Training rows followed by synthetic rows.
pub fn combine(train: &Dataset, synth: &SyntheticSet) -> Result<Dataset> {
    if synth.features.ncols() != train.n_features() {
        return Err(Error::DimensionMismatch {
            expected: train.n_features(),
            found: synth.features.ncols(),
        });
    }
    if synth.features.nrows() != synth.labels.len() {
        return Err(Error::DimensionMismatch {
            expected: synth.features.nrows(),
            found: synth.labels.len(),
        });
    }
    let features = concatenate(Axis(0), &[train.features().view(), synth.features.view()])
        .map_err(|e| Error::invalid(e.to_string()))?;
    let target = concatenate(Axis(0), &[train.target().view(), synth.labels.view()])
        .map_err(|e| Error::invalid(e.to_string()))?;
    Dataset::new(features, target, train.feature_names().to_vec(), train.target_name())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::compute_column_stats;
    use crate::teacher::{fit_teacher, CandidateKind, TeacherSpec};
    use ndarray::array;

    fn small() -> Dataset {
        Dataset::from_arrays(
            array![
                [0.0, 10.0],
                [1.0, 20.0],
                [2.0, 15.0],
                [3.0, 40.0],
                [4.0, 25.0],
                [5.0, 30.0]
            ],
            array![1.0, 2.0, 3.0, 5.0, 8.0, 13.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_copies_rows() {
        let d = small();
        let stats = compute_column_stats(&d).unwrap();
        let cfg = AugmentationConfig::new(Strategy::NaiveNoise, 50, 0.0, 3);
        let s = generate_naive_noise(&d, &stats, &cfg).unwrap();
        assert_eq!(s.len(), 50);
        for (r, prov) in s.provenance.iter().enumerate() {
            let Provenance::Perturbed { source } = *prov else {
                panic!()
            };
            assert_eq!(s.features.row(r), d.features().row(source));
            assert_eq!(s.labels[r], d.target()[source]);
        }
    }

    #[test]
    fn column_mean_mode_shifts_by_mean() {
        let d = small();
        let stats = compute_column_stats(&d).unwrap();
        let cfg = AugmentationConfig {
            noise_center: NoiseCenter::ColumnMean,
            ..AugmentationConfig::new(Strategy::NaiveNoise, 5, 0.0, 3)
        };
        let s = generate_naive_noise(&d, &stats, &cfg).unwrap();
        for (r, prov) in s.provenance.iter().enumerate() {
            let Provenance::Perturbed { source } = *prov else {
                panic!()
            };
            for c in 0..2 {
                assert_eq!(s.features[[r, c]], d.features()[[source, c]] + stats.means[c]);
            }
        }
    }

    #[test]
    fn empty_volume() {
        let d = small();
        let stats = compute_column_stats(&d).unwrap();
        let spec = TeacherSpec {
            cv_folds: 2,
            ..TeacherSpec::only(&[CandidateKind::Ridge])
        };
        let t = fit_teacher(&d, &spec).unwrap();
        let cfg = AugmentationConfig::new(Strategy::TeacherNoise, 0, 0.05, 0);
        let s = generate_teacher_noise(&d, &stats, &cfg, &t).unwrap();
        assert!(s.is_empty());
        assert_eq!(combine(&d, &s).unwrap(), d);
    }

    #[test]
    fn mixup_endpoints_and_midpoint() {
        let d = Dataset::from_arrays(array![[0.0, 2.0], [4.0, 6.0]], array![1.0, 3.0]).unwrap();
        let one = AugmentationConfig {
            fixed_lambda: Some(1.0),
            ..AugmentationConfig::new(Strategy::Mixup, 20, 0.0, 1)
        };
        let s = generate_mixup(&d, &one).unwrap();
        for (r, prov) in s.provenance.iter().enumerate() {
            let Provenance::Mixed { first, .. } = *prov else {
                panic!()
            };
            assert_eq!(s.features.row(r), d.features().row(first));
            assert_eq!(s.labels[r], d.target()[first]);
        }
        let half = AugmentationConfig {
            fixed_lambda: Some(0.5),
            ..one
        };
        let s = generate_cmixup(&d, &half).unwrap();
        for r in 0..s.len() {
            assert_eq!(s.features.row(r), array![2.0, 4.0]);
            assert_eq!(s.labels[r], 2.0);
        }
    }

    #[test]
    fn cmixup_kernel_ratio() {
        let w = cmixup_partner_weights(&[0.0, 0.1, 10.0], 0, 0.5);
        let expected = (-0.02f64).exp() / ((-0.02f64).exp() + (-200.0f64).exp());
        assert_eq!(w[0], 0.0);
        assert!((w[1] - expected).abs() < 1e-15);
        let flat = cmixup_partner_weights(&[0.0, 0.1, 10.0], 1, f64::INFINITY);
        assert_eq!(flat, vec![0.5, 0.0, 0.5]);
        let far = cmixup_partner_weights(&[0.0, 1e6, 2e6], 0, 1e-3);
        assert_eq!(far, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn too_few_rows_and_bad_config() {
        let one = Dataset::from_arrays(array![[1.0]], array![1.0]).unwrap();
        assert!(generate_mixup(&one, &AugmentationConfig::new(Strategy::Mixup, 3, 0.0, 0)).is_err());
        assert!(generate_cmixup(&one, &AugmentationConfig::new(Strategy::Cmixup, 3, 0.0, 0)).is_err());
        let d = small();
        let bad = AugmentationConfig {
            cmixup_bandwidth: Some(0.0),
            ..AugmentationConfig::new(Strategy::Cmixup, 3, 0.0, 0)
        };
        assert!(generate_cmixup(&d, &bad).is_err());
        let stats = compute_column_stats(&d).unwrap();
        assert!(generate_naive_noise(&d, &stats, &AugmentationConfig::new(Strategy::NaiveNoise, 3, -0.1, 0)).is_err());
    }

    #[test]
    fn combine_orders_rows() {
        let d = small();
        let synth = SyntheticSet {
            features: array![[9.0, 9.0]],
            labels: array![99.0],
            provenance: vec![Provenance::Perturbed { source: 0 }],
        };
        let c = combine(&d, &synth).unwrap();
        assert_eq!(c.n_rows(), 7);
        assert_eq!(c.target().slice(ndarray::s![..6]), d.target());
        assert_eq!(c.target()[6], 99.0);
        let wrong = SyntheticSet {
            features: array![[9.0]],
            labels: array![99.0],
            provenance: vec![],
        };
        assert!(combine(&d, &wrong).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            Strategy::TeacherNoise,
            Strategy::NaiveNoise,
            Strategy::Mixup,
            Strategy::Cmixup,
            Strategy::None,
            Strategy::DistillOnly,
        ] {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("ada".parse::<Strategy>().is_err());
    }
}
