//! Teacher-labelled noise augmentation for tabular regression.
//!
//! A classical teacher model (ridge, kNN or random forest, chosen by k-fold CV)
//! labels Gaussian-perturbed copies of training rows; an MLP student is then
//! trained on the union of real and synthetic rows. Naive noise, Mixup and
//! C-Mixup are available as baselines, and [`harness`] runs the repeated-seed
//! experiments that compare them.

pub mod augment;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod student;
pub mod teacher;

pub use ndarray;

pub use augment::{AugmentationConfig, NoiseCenter, Provenance, Strategy, SyntheticSet};
pub use datagen::{GeneratorKind, GeneratorSpec};
pub use dataset::{ColumnStats, Dataset, MissingPolicy, SplitSpec, Standardizer};
pub use error::{Error, Result};
pub use harness::{ExperimentPlan, Report, ReportKind, RunOptions, TrialResult};
pub use student::{StudentSpec, TrainedStudent};
pub use teacher::{CandidateKind, TeacherSpec, TrainedTeacher};
