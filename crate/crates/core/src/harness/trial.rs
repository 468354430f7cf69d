//! One repetition of the teacher/student pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{combine, generate, AugmentationConfig, Strategy};
use crate::dataset::{compute_column_stats, split, subsample, Dataset, SplitSpec};
use crate::error::Result;
use crate::metrics::{rmse, sample_std};
use crate::rng::derive_seed_path;
use crate::student::{evaluate_student, fit_student, StudentSpec};
use crate::teacher::{fit_teacher, teacher_predict, TeacherSpec};

use super::plan::{AugmentationOptions, ExperimentPlan, TrainSize};
use super::stats::improvement;

const SPLIT_STREAM: u64 = 1;
const SUBSAMPLE_STREAM: u64 = 2;
const TEACHER_STREAM: u64 = 3;
const STUDENT_STREAM: u64 = 4;
const AUGMENT_STREAM: u64 = 5;

/// Seed of trial `index`: `base_seed + index`. Every random stream of the trial is
/// derived from it, so adding trials never changes earlier ones.
pub fn trial_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// The part of a plan a single trial needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSettings {
    pub test_fraction: f64,
    pub teacher: TeacherSpec,
    pub student: StudentSpec,
    pub augmentation: AugmentationOptions,
}

impl TrialSettings {
    pub fn from_plan(plan: &ExperimentPlan) -> Self {
        TrialSettings {
            test_fraction: plan.test_fraction,
            teacher: plan.teacher.clone(),
            student: plan.student.clone(),
            augmentation: plan.augmentation.clone(),
        }
    }
}

/// One (strategy, volume, noise) combination. Strategies without synthetic rows use
/// volume 0 and eta 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub volume: usize,
    pub eta: f64,
}

impl Cell {
    pub fn new(strategy: Strategy, volume: usize, eta: f64) -> Self {
        if strategy.uses_synthetic_rows() {
            Cell { strategy, volume, eta }
        } else {
            Cell {
                strategy,
                volume: 0,
                eta: 0.0,
            }
        }
    }
}

/// Wall-clock milliseconds per phase. Teacher and baseline phases are shared by all
/// cells of a trial and repeated in each result.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseDurations {
    pub teacher_ms: u64,
    pub baseline_ms: u64,
    pub augment_ms: u64,
    pub augmented_fit_ms: u64,
}

impl PhaseDurations {
    pub fn to_field(&self) -> String {
        format!(
            "teacher={};baseline={};augment={};augmented_fit={}",
            self.teacher_ms, self.baseline_ms, self.augment_ms, self.augmented_fit_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub dataset: String,
    pub seed: u64,
    pub train_size: usize,
    pub train_size_label: String,
    pub strategy: Strategy,
    pub volume: usize,
    pub eta: f64,
    pub p_baseline: f64,
    pub p_aug: f64,
    /// Absent when no strategy in the trial needed a teacher.
    pub teacher_rmse: Option<f64>,
    pub teacher_model: Option<String>,
    /// Sample standard deviation of the test targets (the NRMSE denominator).
    pub test_target_std: f64,
    pub improvement_pct: f64,
    pub durations: PhaseDurations,
}

/// A (dataset, train size, trial) combination that could not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub dataset: String,
    pub train_size_label: String,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Done(Vec<TrialResult>),
    Skipped(SkippedCell),
}

fn ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Runs split, subsample, teacher fit, baseline student and every cell on one seed.
/// The teacher and the baseline student are fitted once and shared; every student
/// uses the same spec and seed, so cells differ only in their training data.
pub fn run_trial_cells(
    dataset_name: &str,
    data: &Dataset,
    size: &TrainSize,
    cells: &[Cell],
    seed: u64,
    settings: &TrialSettings,
) -> Result<TrialOutcome> {
    let split_spec = SplitSpec::new(settings.test_fraction, derive_seed_path(seed, &[SPLIT_STREAM]));
    let (full_train, test) = split(data, &split_spec)?;
    let Some(n_train) = size.resolve(data.n_rows(), full_train.n_rows()) else {
        return Ok(TrialOutcome::Skipped(SkippedCell {
            dataset: dataset_name.to_owned(),
            train_size_label: size.to_string(),
            seed,
            reason: format!(
                "train size {size} exceeds the {} available training rows",
                full_train.n_rows()
            ),
        }));
    };
    let train = if n_train == full_train.n_rows() {
        full_train
    } else {
        subsample(
            &full_train,
            n_train,
            derive_seed_path(seed, &[SUBSAMPLE_STREAM, n_train as u64]),
        )?
    };
    let y_test = test.target();
    let test_target_std = sample_std(y_test.as_slice().expect("contiguous target"));

    let mut durations = PhaseDurations::default();
    let teacher = if cells.iter().any(|c| c.strategy.needs_teacher()) {
        let t0 = Instant::now();
        let spec = TeacherSpec {
            seed: derive_seed_path(seed, &[TEACHER_STREAM, settings.teacher.seed]),
            ..settings.teacher.clone()
        };
        let teacher = fit_teacher(&train, &spec)?;
        durations.teacher_ms = ms(t0);
        Some(teacher)
    } else {
        None
    };
    let teacher_rmse = match &teacher {
        Some(t) => {
            let pred = teacher_predict(t, test.features().view())?;
            Some(rmse(pred.view(), y_test.view())?)
        }
        None => None,
    };

    let student_spec = StudentSpec {
        seed: derive_seed_path(seed, &[STUDENT_STREAM, settings.student.seed]),
        ..settings.student.clone()
    };
    let t0 = Instant::now();
    let baseline = fit_student(&train, &student_spec)?;
    let p_baseline = evaluate_student(&baseline, &test)?;
    durations.baseline_ms = ms(t0);

    let stats = compute_column_stats(&train)?;
    let mut results = Vec::with_capacity(cells.len());
    for cell in cells {
        let mut d = durations;
        let p_aug = match cell.strategy {
            Strategy::None => p_baseline,
            Strategy::DistillOnly => {
                let t0 = Instant::now();
                let teacher = teacher.as_ref().expect("teacher fitted for distill_only");
                let relabelled = train.with_target(teacher_predict(teacher, train.features().view())?)?;
                d.augment_ms = ms(t0);
                let t0 = Instant::now();
                let p = evaluate_student(&fit_student(&relabelled, &student_spec)?, &test)?;
                d.augmented_fit_ms = ms(t0);
                p
            }
            strategy => {
                let t0 = Instant::now();
                let config = AugmentationConfig {
                    strategy,
                    volume: cell.volume,
                    eta: cell.eta,
                    noise_center: settings.augmentation.noise_center,
                    mixup_alpha: settings.augmentation.mixup_alpha,
                    cmixup_bandwidth: settings.augmentation.cmixup_bandwidth,
                    fixed_lambda: None,
                    // Shared by all strategies of the trial: teacher and naive noise see
                    // the same perturbed rows and differ only in labels.
                    seed: derive_seed_path(seed, &[AUGMENT_STREAM, cell.volume as u64, cell.eta.to_bits()]),
                };
                let synth = generate(&train, &stats, &config, teacher.as_ref())?;
                let combined = combine(&train, &synth)?;
                d.augment_ms = ms(t0);
                let t0 = Instant::now();
                let p = evaluate_student(&fit_student(&combined, &student_spec)?, &test)?;
                d.augmented_fit_ms = ms(t0);
                p
            }
        };
        results.push(TrialResult {
            dataset: dataset_name.to_owned(),
            seed,
            train_size: train.n_rows(),
            train_size_label: size.to_string(),
            strategy: cell.strategy,
            volume: cell.volume,
            eta: cell.eta,
            p_baseline,
            p_aug,
            teacher_rmse,
            teacher_model: teacher.as_ref().map(|t| t.summary()),
            test_target_std,
            improvement_pct: improvement(p_baseline, p_aug)?,
            durations: d,
        });
    }
    Ok(TrialOutcome::Done(results))
}

/// Single-cell form of [`run_trial_cells`].
pub fn run_trial(
    dataset_name: &str,
    data: &Dataset,
    size: &TrainSize,
    cell: Cell,
    seed: u64,
    settings: &TrialSettings,
) -> Result<std::result::Result<TrialResult, SkippedCell>> {
    Ok(
        match run_trial_cells(dataset_name, data, size, &[cell], seed, settings)? {
            TrialOutcome::Done(mut r) => Ok(r.remove(0)),
            TrialOutcome::Skipped(s) => Err(s),
        },
    )
}
