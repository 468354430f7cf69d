//! Experiment modes: benchmark, grid, learning curve and distillation analysis.

pub mod plan;
pub mod report;
pub mod stats;
pub mod trial;

use std::path::Path;

use rayon::prelude::*;

use crate::augment::{combine, generate, AugmentationConfig, Provenance, Strategy};
use crate::dataset::{compute_column_stats, Dataset};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::teacher::{fit_teacher, TeacherSpec};

pub use plan::{AugmentationOptions, DatasetSource, DatasetSources, ExperimentPlan, TrainSize};
pub use report::{emit_report, Report, ReportKind};
pub use stats::{confidence_interval, improvement, paired_t_test, t_critical, Stats};
pub use trial::{run_trial, run_trial_cells, trial_seed, Cell, SkippedCell, TrialOutcome, TrialResult, TrialSettings};

/// Execution knobs that must not change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for trials; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
}

/// Every (strategy, volume, eta) combination of the plan, in plan order. Strategies
/// without synthetic rows appear once.
pub fn plan_cells(plan: &ExperimentPlan) -> Vec<Cell> {
    let mut cells: Vec<Cell> = Vec::new();
    for &strategy in &plan.strategies {
        for &eta in &plan.etas {
            for &volume in &plan.volumes {
                let cell = Cell::new(strategy, volume, eta);
                if !cells.contains(&cell) {
                    cells.push(cell);
                }
            }
        }
    }
    cells
}

fn run_cells(plan: &ExperimentPlan, cells: &[Cell], opts: RunOptions) -> Result<(Vec<TrialResult>, Vec<SkippedCell>)> {
    plan.validate()?;
    let datasets: Vec<(String, Dataset)> = plan
        .datasets()
        .iter()
        .map(|src| Ok((src.display_name(), src.load()?)))
        .collect::<Result<_>>()?;
    let settings = TrialSettings::from_plan(plan);

    let mut tasks = Vec::new();
    for (d, _) in datasets.iter().enumerate() {
        for size in &plan.train_sizes {
            for i in 0..plan.trials {
                tasks.push((d, size, trial_seed(plan.base_seed, i)));
            }
        }
    }
    let run = || -> Vec<Result<TrialOutcome>> {
        tasks
            .par_iter()
            .map(|&(d, size, seed)| {
                let (name, data) = &datasets[d];
                run_trial_cells(name, data, size, cells, seed, &settings)
            })
            .collect()
    };
    let outcomes = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut trials = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome? {
            TrialOutcome::Done(r) => trials.extend(r),
            TrialOutcome::Skipped(s) => skipped.push(s),
        }
    }
    Ok((trials, skipped))
}

fn finish(
    plan: &ExperimentPlan,
    kind: ReportKind,
    (trials, skipped): (Vec<TrialResult>, Vec<SkippedCell>),
) -> Result<Report> {
    Ok(Report::from_trials(kind, trials, skipped)?.with_timings(plan.record_timings))
}

/// Compares every plan strategy against the unaugmented baseline.
pub fn run_benchmark(plan: &ExperimentPlan, opts: RunOptions) -> Result<Report> {
    let cells = plan_cells(plan);
    finish(plan, ReportKind::Benchmark, run_cells(plan, &cells, opts)?)
}

/// Improvement over the train-size by volume grid.
pub fn run_grid(plan: &ExperimentPlan, opts: RunOptions) -> Result<Report> {
    let cells = plan_cells(plan);
    finish(plan, ReportKind::Grid, run_cells(plan, &cells, opts)?)
}

/// Baseline student error against train size. Only the unaugmented student is
/// trained, whatever strategies the plan lists.
pub fn run_learning_curve(plan: &ExperimentPlan, opts: RunOptions) -> Result<Report> {
    if plan.train_sizes.len() < 2 {
        return Err(Error::Plan("a learning curve needs at least two train sizes".into()));
    }
    let cells = [Cell::new(Strategy::None, 0, 0.0)];
    finish(plan, ReportKind::LearningCurve, run_cells(plan, &cells, opts)?)
}

/// Teacher advantage against augmentation gain, plus the distillation-only control.
pub fn run_distillation_analysis(plan: &ExperimentPlan, opts: RunOptions) -> Result<Report> {
    if !plan.strategies.contains(&Strategy::TeacherNoise) {
        return Err(Error::Plan(
            "distillation analysis needs the teacher_noise strategy".into(),
        ));
    }
    let mut cells = plan_cells(plan);
    let control = Cell::new(Strategy::DistillOnly, 0, 0.0);
    if !cells.contains(&control) {
        cells.push(control);
    }
    finish(plan, ReportKind::Distillation, run_cells(plan, &cells, opts)?)
}

/// Original rows followed by synthetic rows, with the provenance of each synthetic row.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedData {
    pub data: Dataset,
    pub n_original: usize,
    pub provenance: Vec<Provenance>,
    pub teacher_model: Option<String>,
}

impl AugmentedData {
    /// CSV text: features, target and a `provenance` column that is empty for
    /// original rows.
    pub fn to_csv_string(&self) -> Result<String> {
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.data.feature_names().iter().map(String::as_str).collect();
        header.push(self.data.target_name());
        header.push("provenance");
        w.write_record(&header).map_err(csv_err)?;
        let x = self.data.features();
        let y = self.data.target();
        for i in 0..self.data.n_rows() {
            let mut rec: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(y[i].to_string());
            rec.push(
                i.checked_sub(self.n_original)
                    .map(|k| self.provenance[k].to_string())
                    .unwrap_or_default(),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        report::write_atomic(path, self.to_csv_string()?.as_bytes())
    }
}

/// Augments the whole dataset of a single-dataset plan with its first strategy,
/// first volume and first eta. The teacher, if needed, is fitted on every row.
pub fn augment_dataset(plan: &ExperimentPlan) -> Result<AugmentedData> {
    plan.validate()?;
    let [source] = plan.datasets() else {
        return Err(Error::Plan("augment needs exactly one dataset".into()));
    };
    let strategy = plan.strategies[0];
    if strategy == Strategy::DistillOnly {
        return Err(Error::Plan("distill_only does not generate rows".into()));
    }
    let data = source.load()?;
    let teacher = if strategy.needs_teacher() {
        let spec = TeacherSpec {
            seed: derive_seed(plan.base_seed, plan.teacher.seed),
            ..plan.teacher.clone()
        };
        Some(fit_teacher(&data, &spec)?)
    } else {
        None
    };
    let a = &plan.augmentation;
    let config = AugmentationConfig {
        noise_center: a.noise_center,
        mixup_alpha: a.mixup_alpha,
        cmixup_bandwidth: a.cmixup_bandwidth,
        ..AugmentationConfig::new(strategy, plan.volumes[0], plan.etas[0], plan.base_seed)
    };
    let stats = compute_column_stats(&data)?;
    let synth = generate(&data, &stats, &config, teacher.as_ref())?;
    Ok(AugmentedData {
        data: combine(&data, &synth)?,
        n_original: data.n_rows(),
        provenance: synth.provenance,
        teacher_model: teacher.map(|t| t.summary()),
    })
}
