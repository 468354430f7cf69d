//! Experiment plan file (JSON).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::augment::{NoiseCenter, Strategy, DEFAULT_ETA, DEFAULT_VOLUME};
use crate::datagen::{generate, GeneratorSpec};
use crate::dataset::{load_csv, Dataset, MissingPolicy, SplitSpec};
use crate::error::{Error, Result};
use crate::student::StudentSpec;
use crate::teacher::TeacherSpec;

/// Where a dataset comes from: a CSV file or a named generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_column: Option<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

impl DatasetSource {
    pub fn generated(spec: GeneratorSpec) -> Self {
        DatasetSource {
            generator: Some(spec),
            ..Default::default()
        }
    }

    pub fn csv(path: impl Into<PathBuf>, target_column: impl Into<String>) -> Self {
        DatasetSource {
            csv_path: Some(path.into()),
            target_column: Some(target_column.into()),
            ..Default::default()
        }
    }

    pub fn display_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match (&self.csv_path, &self.generator) {
            (Some(p), _) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            (None, Some(g)) => g.name().to_owned(),
            (None, None) => "dataset".to_owned(),
        }
    }

    fn validate(&self) -> Result<()> {
        match (&self.csv_path, &self.generator) {
            (Some(_), Some(_)) => Err(Error::Plan("dataset has both csv_path and generator".into())),
            (None, None) => Err(Error::Plan("dataset needs csv_path or generator".into())),
            (Some(_), None) if self.target_column.is_none() => {
                Err(Error::Plan("csv dataset needs target_column".into()))
            }
            (None, Some(g)) => g.validate().map_err(|e| Error::Plan(e.to_string())),
            _ => Ok(()),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        self.validate()?;
        match (&self.csv_path, &self.generator) {
            (Some(path), _) => load_csv(path, self.target_column.as_deref().unwrap_or("y"), self.missing_policy),
            (None, Some(g)) => generate(g),
            (None, None) => unreachable!("validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSources {
    One(DatasetSource),
    Many(Vec<DatasetSource>),
}

impl DatasetSources {
    pub fn as_slice(&self) -> &[DatasetSource] {
        match self {
            DatasetSources::One(s) => std::slice::from_ref(s),
            DatasetSources::Many(v) => v,
        }
    }

    fn as_mut_slice(&mut self) -> &mut [DatasetSource] {
        match self {
            DatasetSources::One(s) => std::slice::from_mut(s),
            DatasetSources::Many(v) => v,
        }
    }
}

/// A training-set size: an absolute row count, a percentage of all rows, or the
/// smaller of a count and a percentage (written `"min(50000,80%)"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainSize {
    Rows(usize),
    Percent(f64),
    CappedPercent { cap: usize, percent: f64 },
}

impl TrainSize {
    /// Row count for a dataset of `n_total` rows whose training partition has
    /// `n_train` rows. `None` when an absolute count does not fit.
    pub fn resolve(&self, n_total: usize, n_train: usize) -> Option<usize> {
        let of_total = |p: f64| (((p / 100.0) * n_total as f64 + 0.5).floor() as usize).clamp(1, n_train);
        match *self {
            TrainSize::Rows(k) => (k <= n_train).then_some(k),
            TrainSize::Percent(p) => Some(of_total(p)),
            TrainSize::CappedPercent { cap, percent } => Some(of_total(percent).min(cap)),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TrainSize::Rows(k) => k > 0,
            TrainSize::Percent(p) => p > 0.0 && p <= 100.0,
            TrainSize::CappedPercent { cap, percent } => cap > 0 && percent > 0.0 && percent <= 100.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Plan(format!("invalid train size `{self}`")))
        }
    }
}

impl fmt::Display for TrainSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainSize::Rows(k) => write!(f, "{k}"),
            TrainSize::Percent(p) => write!(f, "{p}%"),
            TrainSize::CappedPercent { cap, percent } => write!(f, "min({cap},{percent}%)"),
        }
    }
}

impl std::str::FromStr for TrainSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Plan(format!("cannot parse train size `{s}`"));
        let pct = |t: &str| -> Result<f64> {
            t.trim()
                .strip_suffix('%')
                .ok_or_else(bad)?
                .trim()
                .parse()
                .map_err(|_| bad())
        };
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("min(").and_then(|r| r.strip_suffix(')')) {
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            let cap = a.trim().parse().map_err(|_| bad())?;
            return Ok(TrainSize::CappedPercent { cap, percent: pct(b)? });
        }
        if s.ends_with('%') {
            return Ok(TrainSize::Percent(pct(s)?));
        }
        s.parse().map(TrainSize::Rows).map_err(|_| bad())
    }
}

impl Serialize for TrainSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TrainSize::Rows(k) => s.serialize_u64(*k as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for TrainSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(TrainSize::Rows(k as usize)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Strategy hyperparameters shared by every cell of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationOptions {
    pub noise_center: NoiseCenter,
    pub mixup_alpha: f64,
    pub cmixup_bandwidth: Option<f64>,
}

impl Default for AugmentationOptions {
    fn default() -> Self {
        AugmentationOptions {
            noise_center: NoiseCenter::ZeroMean,
            mixup_alpha: 1.0,
            cmixup_bandwidth: None,
        }
    }
}

fn default_volumes() -> Vec<usize> {
    vec![DEFAULT_VOLUME]
}
fn default_etas() -> Vec<f64> {
    vec![DEFAULT_ETA]
}
fn default_train_sizes() -> Vec<TrainSize> {
    vec![TrainSize::Percent(80.0)]
}
fn default_trials() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    SplitSpec::default().test_fraction
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(alias = "datasets")]
    pub dataset: DatasetSources,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_volumes")]
    pub volumes: Vec<usize>,
    #[serde(default = "default_train_sizes")]
    pub train_sizes: Vec<TrainSize>,
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub teacher: TeacherSpec,
    #[serde(default)]
    pub student: StudentSpec,
    #[serde(default)]
    pub augmentation: AugmentationOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Fill the `phase_durations_ms` column. Off by default because wall-clock
    /// times make `trials.csv` differ between otherwise identical runs.
    #[serde(default)]
    pub record_timings: bool,
}

impl ExperimentPlan {
    /// A plan with defaults for everything but the data and strategies.
    pub fn new(dataset: DatasetSource, strategies: Vec<Strategy>) -> Self {
        ExperimentPlan {
            dataset: DatasetSources::One(dataset),
            strategies,
            volumes: default_volumes(),
            train_sizes: default_train_sizes(),
            etas: default_etas(),
            trials: default_trials(),
            base_seed: 0,
            test_fraction: default_test_fraction(),
            teacher: TeacherSpec::default(),
            student: StudentSpec::default(),
            augmentation: AugmentationOptions::default(),
            output_dir: default_output_dir(),
            record_timings: false,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = serde_json::from_str(text).map_err(|e| Error::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Parses and validates a plan file; relative dataset and output paths are taken
    /// relative to the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Plan(format!("{}: {e}", path.display())))?;
        let mut plan = Self::from_json_str(&text)?;
        if let Some(base) = path.parent() {
            for src in plan.dataset.as_mut_slice() {
                if let Some(p) = &src.csv_path {
                    if p.is_relative() {
                        src.csv_path = Some(base.join(p));
                    }
                }
            }
            if plan.output_dir.is_relative() {
                plan.output_dir = base.join(&plan.output_dir);
            }
        }
        Ok(plan)
    }

    pub fn datasets(&self) -> &[DatasetSource] {
        self.dataset.as_slice()
    }

    pub fn validate(&self) -> Result<()> {
        let plan_err = |m: &str| Err(Error::Plan(m.to_owned()));
        if self.datasets().is_empty() {
            return plan_err("at least one dataset is required");
        }
        for d in self.datasets() {
            d.validate()?;
        }
        if self.strategies.is_empty() {
            return plan_err("at least one strategy is required");
        }
        if self.trials == 0 {
            return plan_err("trials must be at least 1");
        }
        if self.volumes.is_empty() || self.volumes.contains(&0) {
            return plan_err("volumes must be a non-empty list of positive counts");
        }
        if self.etas.is_empty() || self.etas.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return plan_err("etas must be a non-empty list of positive numbers");
        }
        if self.train_sizes.is_empty() {
            return plan_err("train_sizes must not be empty");
        }
        for s in &self.train_sizes {
            s.validate()?;
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return plan_err("test_fraction must lie in (0, 1)");
        }
        let a = &self.augmentation;
        if a.mixup_alpha.is_nan() || a.mixup_alpha <= 0.0 || a.cmixup_bandwidth.is_some_and(|h| h.is_nan() || h <= 0.0)
        {
            return plan_err("mixup_alpha and cmixup_bandwidth must be positive");
        }
        self.teacher.validate().map_err(|e| Error::Plan(e.to_string()))?;
        self.student.validate().map_err(|e| Error::Plan(e.to_string()))?;
        Ok(())
    }
}
