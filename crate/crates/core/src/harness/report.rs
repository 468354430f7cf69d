//! Aggregation of trial tables and report files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::Strategy;
use crate::error::{Error, Result};
use crate::metrics::{mean, median};

use super::stats::{improvement, paired_t_test, Stats};
use super::trial::{SkippedCell, TrialResult};

pub const TRIALS_HEADER: [&str; 14] = [
    "seed",
    "train_size",
    "strategy",
    "volume",
    "eta",
    "p_baseline",
    "p_aug",
    "teacher_rmse",
    "improvement_pct",
    "phase_durations_ms",
    "dataset",
    "train_size_label",
    "teacher_model",
    "test_target_std",
];

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Benchmark,
    Grid,
    LearningCurve,
    Distillation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    /// `dataset/strategy/train_size/volume/eta`
    pub key: String,
    pub dataset: String,
    pub strategy: Strategy,
    pub train_size_label: String,
    pub volume: usize,
    pub eta: f64,
    pub improvement_pct: Stats,
    pub p_baseline: Stats,
    pub p_aug: Stats,
    pub teacher_rmse_mean: Option<f64>,
}

/// Simple mean over every (dataset, trial) improvement of a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOverall {
    pub strategy: Strategy,
    pub n: usize,
    pub mean_improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkColumn {
    /// A strategy name, or `baseline` for the unaugmented student.
    pub label: String,
    pub rmse: Stats,
    /// Paired t-test against the best column; `None` for the best column itself.
    pub p_value_vs_best: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub dataset: String,
    pub train_size_label: String,
    pub volume: usize,
    pub eta: f64,
    pub columns: Vec<BenchmarkColumn>,
    pub best: String,
    /// The best column beats every alternative at the 5% level.
    pub best_is_significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub strategy: Strategy,
    pub eta: f64,
    pub volume: usize,
    pub train_size_label: String,
    pub n: usize,
    pub mean_improvement_pct: Option<f64>,
    pub median_improvement_pct: Option<f64>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub dataset: String,
    pub train_size_label: String,
    pub mean_train_size: f64,
    /// Baseline RMSE divided by the test-target standard deviation.
    pub nrmse: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationPoint {
    pub dataset: String,
    pub n: usize,
    /// Mean of `improvement(p_baseline, teacher_rmse)`: how much better the teacher is
    /// than the unaugmented student, in percent.
    pub teacher_advantage_pct: f64,
    pub augmentation_improvement_pct: f64,
    pub distill_only_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: ReportKind,
    pub trials: Vec<TrialResult>,
    pub skipped: Vec<SkippedCell>,
    pub configurations: Vec<ConfigSummary>,
    pub overall: Vec<StrategyOverall>,
    pub benchmark: Vec<BenchmarkRow>,
    pub grid: Vec<GridCell>,
    pub curve: Vec<CurvePoint>,
    pub distillation: Vec<DistillationPoint>,
    pub include_timings: bool,
}

/// Groups items by key, keeping keys in order of first appearance.
fn group_by<'a, T, K: PartialEq>(items: impl IntoIterator<Item = &'a T>, key: impl Fn(&T) -> K) -> Vec<(K, Vec<&'a T>)>
where
    T: 'a,
{
    let mut groups: Vec<(K, Vec<&T>)> = Vec::new();
    for item in items {
        let k = key(item);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(item),
            None => groups.push((k, vec![item])),
        }
    }
    groups
}

fn eta_key(eta: f64) -> u64 {
    eta.to_bits()
}

impl Report {
    /// Builds every aggregate from the trial table. Sections that do not apply to
    /// `kind` are left empty.
    pub fn from_trials(kind: ReportKind, trials: Vec<TrialResult>, skipped: Vec<SkippedCell>) -> Result<Report> {
        let configurations = configurations(&trials);
        let overall = group_by(&trials, |t| t.strategy)
            .into_iter()
            .map(|(strategy, ts)| StrategyOverall {
                strategy,
                n: ts.len(),
                mean_improvement_pct: mean(&ts.iter().map(|t| t.improvement_pct).collect::<Vec<_>>()),
            })
            .collect();
        let mut report = Report {
            kind,
            trials,
            skipped,
            configurations,
            overall,
            benchmark: vec![],
            grid: vec![],
            curve: vec![],
            distillation: vec![],
            include_timings: false,
        };
        match kind {
            ReportKind::Benchmark => report.benchmark = benchmark_rows(&report.trials)?,
            ReportKind::Grid => report.grid = grid_cells(&report.trials, &report.skipped),
            ReportKind::LearningCurve => report.curve = curve_points(&report.trials),
            ReportKind::Distillation => report.distillation = distillation_points(&report.trials)?,
        }
        Ok(report)
    }

    pub fn with_timings(mut self, include: bool) -> Self {
        self.include_timings = include;
        self
    }
}

fn configurations(trials: &[TrialResult]) -> Vec<ConfigSummary> {
    group_by(trials, |t| {
        (
            t.dataset.clone(),
            t.strategy,
            t.train_size_label.clone(),
            t.volume,
            eta_key(t.eta),
        )
    })
    .into_iter()
    .map(|((dataset, strategy, size, volume, _), ts)| {
        let eta = ts[0].eta;
        let col = |f: fn(&TrialResult) -> f64| ts.iter().map(|t| f(t)).collect::<Vec<_>>();
        let teacher: Vec<f64> = ts.iter().filter_map(|t| t.teacher_rmse).collect();
        ConfigSummary {
            key: format!("{dataset}/{strategy}/{size}/{volume}/{eta}"),
            dataset,
            strategy,
            train_size_label: size,
            volume,
            eta,
            improvement_pct: Stats::of(&col(|t| t.improvement_pct)),
            p_baseline: Stats::of(&col(|t| t.p_baseline)),
            p_aug: Stats::of(&col(|t| t.p_aug)),
            teacher_rmse_mean: (!teacher.is_empty()).then(|| mean(&teacher)),
        }
    })
    .collect()
}

/// Per-seed RMSEs of one benchmark column.
struct Column {
    label: String,
    by_seed: Vec<(u64, f64)>,
}

fn benchmark_rows(trials: &[TrialResult]) -> Result<Vec<BenchmarkRow>> {
    let mut rows = Vec::new();
    for ((dataset, size), ts) in group_by(trials, |t| (t.dataset.clone(), t.train_size_label.clone())) {
        let synthetic: Vec<&TrialResult> = ts
            .iter()
            .copied()
            .filter(|t| t.strategy.uses_synthetic_rows())
            .collect();
        let mut settings: Vec<(usize, f64)> = group_by(synthetic.iter().copied(), |t| (t.volume, eta_key(t.eta)))
            .into_iter()
            .map(|(_, g)| (g[0].volume, g[0].eta))
            .collect();
        if settings.is_empty() {
            settings.push((0, 0.0));
        }
        for (volume, eta) in settings {
            let mut columns: Vec<Column> = Vec::new();
            for (strategy, g) in group_by(ts.iter().copied(), |t| t.strategy) {
                if strategy == Strategy::None {
                    continue;
                }
                let by_seed: Vec<(u64, f64)> = g
                    .iter()
                    .filter(|t| {
                        !strategy.uses_synthetic_rows() || (t.volume == volume && t.eta.to_bits() == eta.to_bits())
                    })
                    .map(|t| (t.seed, t.p_aug))
                    .collect();
                if !by_seed.is_empty() {
                    columns.push(Column {
                        label: strategy.name().to_owned(),
                        by_seed,
                    });
                }
            }
            let baseline: Vec<(u64, f64)> = group_by(ts.iter().copied(), |t| t.seed)
                .into_iter()
                .map(|(seed, g)| (seed, g[0].p_baseline))
                .collect();
            columns.push(Column {
                label: "baseline".to_owned(),
                by_seed: baseline,
            });
            rows.push(benchmark_row(&dataset, &size, volume, eta, columns)?);
        }
    }
    Ok(rows)
}

fn benchmark_row(dataset: &str, size: &str, volume: usize, eta: f64, columns: Vec<Column>) -> Result<BenchmarkRow> {
    let means: Vec<f64> = columns
        .iter()
        .map(|c| mean(&c.by_seed.iter().map(|p| p.1).collect::<Vec<_>>()))
        .collect();
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m < means[best] {
            best = i;
        }
    }
    let mut out = Vec::with_capacity(columns.len());
    let mut all_significant = columns.len() > 1;
    for (i, c) in columns.iter().enumerate() {
        let p_value = if i == best {
            None
        } else {
            let (a, b): (Vec<f64>, Vec<f64>) = columns[best]
                .by_seed
                .iter()
                .filter_map(|(s, v)| c.by_seed.iter().find(|(s2, _)| s2 == s).map(|(_, w)| (*v, *w)))
                .unzip();
            let p = paired_t_test(&a, &b)?;
            all_significant &= p < SIGNIFICANCE_LEVEL;
            Some(p)
        };
        out.push(BenchmarkColumn {
            label: c.label.clone(),
            rmse: Stats::of(&c.by_seed.iter().map(|p| p.1).collect::<Vec<_>>()),
            p_value_vs_best: p_value,
        });
    }
    Ok(BenchmarkRow {
        dataset: dataset.to_owned(),
        train_size_label: size.to_owned(),
        volume,
        eta,
        best: columns[best].label.clone(),
        columns: out,
        best_is_significant: all_significant,
    })
}

fn grid_cells(trials: &[TrialResult], skipped: &[SkippedCell]) -> Vec<GridCell> {
    let mut sizes: Vec<String> = Vec::new();
    for label in trials
        .iter()
        .map(|t| &t.train_size_label)
        .chain(skipped.iter().map(|s| &s.train_size_label))
    {
        if !sizes.contains(label) {
            sizes.push(label.clone());
        }
    }
    let mut cells = Vec::new();
    for ((strategy, _), ts) in group_by(trials, |t| (t.strategy, eta_key(t.eta))) {
        let eta = ts[0].eta;
        let mut volumes: Vec<usize> = Vec::new();
        for t in &ts {
            if !volumes.contains(&t.volume) {
                volumes.push(t.volume);
            }
        }
        for &volume in &volumes {
            for size in &sizes {
                let vals: Vec<f64> = ts
                    .iter()
                    .filter(|t| t.volume == volume && &t.train_size_label == size)
                    .map(|t| t.improvement_pct)
                    .collect();
                let empty = vals.is_empty();
                cells.push(GridCell {
                    strategy,
                    eta,
                    volume,
                    train_size_label: size.clone(),
                    n: vals.len(),
                    mean_improvement_pct: (!empty).then(|| mean(&vals)),
                    median_improvement_pct: (!empty).then(|| median(&vals)),
                    skipped: empty,
                });
            }
        }
    }
    cells
}

fn curve_points(trials: &[TrialResult]) -> Vec<CurvePoint> {
    // one baseline per (dataset, size, seed)
    let baselines: Vec<&TrialResult> = group_by(trials, |t| (t.dataset.clone(), t.train_size_label.clone(), t.seed))
        .into_iter()
        .map(|(_, g)| g[0])
        .filter(|t| t.test_target_std > 0.0)
        .collect();
    group_by(baselines.iter().copied(), |t| {
        (t.dataset.clone(), t.train_size_label.clone())
    })
    .into_iter()
    .map(|((dataset, size), ts)| {
        let nrmse: Vec<f64> = ts.iter().map(|t| t.p_baseline / t.test_target_std).collect();
        CurvePoint {
            dataset,
            train_size_label: size,
            mean_train_size: mean(&ts.iter().map(|t| t.train_size as f64).collect::<Vec<_>>()),
            nrmse: Stats::of(&nrmse),
        }
    })
    .collect()
}

fn distillation_points(trials: &[TrialResult]) -> Result<Vec<DistillationPoint>> {
    let mut points = Vec::new();
    for (dataset, ts) in group_by(trials, |t| t.dataset.clone()) {
        let aug: Vec<&TrialResult> = ts
            .iter()
            .copied()
            .filter(|t| t.strategy == Strategy::TeacherNoise && t.teacher_rmse.is_some())
            .collect();
        if aug.is_empty() {
            continue;
        }
        let advantage = aug
            .iter()
            .map(|t| improvement(t.p_baseline, t.teacher_rmse.expect("filtered")))
            .collect::<Result<Vec<_>>>()?;
        let distill: Vec<f64> = ts
            .iter()
            .filter(|t| t.strategy == Strategy::DistillOnly)
            .map(|t| t.improvement_pct)
            .collect();
        points.push(DistillationPoint {
            dataset,
            n: aug.len(),
            teacher_advantage_pct: mean(&advantage),
            augmentation_improvement_pct: mean(&aug.iter().map(|t| t.improvement_pct).collect::<Vec<_>>()),
            distill_only_improvement_pct: (!distill.is_empty()).then(|| mean(&distill)),
        });
    }
    Ok(points)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// The trial table as CSV text.
pub fn trials_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(TRIALS_HEADER).map_err(csv_err)?;
    for t in &report.trials {
        let durations = if report.include_timings {
            t.durations.to_field()
        } else {
            String::new()
        };
        w.write_record([
            t.seed.to_string(),
            t.train_size.to_string(),
            t.strategy.to_string(),
            t.volume.to_string(),
            t.eta.to_string(),
            t.p_baseline.to_string(),
            t.p_aug.to_string(),
            opt(t.teacher_rmse),
            t.improvement_pct.to_string(),
            durations,
            t.dataset.clone(),
            t.train_size_label.clone(),
            t.teacher_model.clone().unwrap_or_default(),
            t.test_target_std.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct Summary<'a> {
    kind: ReportKind,
    n_trials: usize,
    notes: Notes,
    overall: &'a [StrategyOverall],
    configurations: &'a [ConfigSummary],
    benchmark: &'a [BenchmarkRow],
    grid: &'a [GridCell],
    curve: &'a [CurvePoint],
    distillation: &'a [DistillationPoint],
    skipped: &'a [SkippedCell],
}

#[derive(Serialize)]
struct Notes {
    improvement_pct: &'static str,
    overall: &'static str,
    ci95: &'static str,
    p_value_vs_best: &'static str,
    nrmse: &'static str,
    teacher_advantage_pct: &'static str,
}

const NOTES: Notes = Notes {
    improvement_pct: "100 * (p_baseline - p_aug) / p_baseline",
    overall: "simple mean over all (dataset, trial) improvements of the strategy",
    ci95: "t_{0.975, n-1} * sample_std / sqrt(n)",
    p_value_vs_best: "two-sided paired t-test over per-seed RMSEs",
    nrmse: "baseline RMSE / sample std of the test targets",
    teacher_advantage_pct: "relative: 100 * (p_baseline - teacher_rmse) / p_baseline",
};

pub fn summary_json(report: &Report) -> Result<String> {
    let summary = Summary {
        kind: report.kind,
        n_trials: report.trials.len(),
        notes: NOTES,
        overall: &report.overall,
        configurations: &report.configurations,
        benchmark: &report.benchmark,
        grid: &report.grid,
        curve: &report.curve,
        distillation: &report.distillation,
        skipped: &report.skipped,
    };
    let mut s = serde_json::to_string_pretty(&summary).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_ci(s: &Stats) -> String {
    match s.ci95 {
        Some(ci) => format!("{:.4} ± {:.4}", s.mean, ci),
        None => fmt4(s.mean),
    }
}

pub fn tables_markdown(report: &Report) -> String {
    let mut md = String::new();
    let title = match report.kind {
        ReportKind::Benchmark => "Strategy comparison",
        ReportKind::Grid => "Improvement grid",
        ReportKind::LearningCurve => "Learning curve",
        ReportKind::Distillation => "Distillation analysis",
    };
    let _ = writeln!(md, "# {title}\n");
    let _ = writeln!(
        md,
        "{} trials, {} skipped cells.\n",
        report.trials.len(),
        report.skipped.len()
    );

    if !report.benchmark.is_empty() {
        let _ = writeln!(
            md,
            "## Test RMSE (mean ± 95% CI)\n\nBest column in bold; `*` marks a best column that beats every alternative (paired t-test, p < 0.05).\n"
        );
        for row in &report.benchmark {
            let _ = writeln!(
                md,
                "### {} (train size {}, V = {}, eta = {})\n",
                row.dataset, row.train_size_label, row.volume, row.eta
            );
            let labels: Vec<&str> = row.columns.iter().map(|c| c.label.as_str()).collect();
            let _ = writeln!(md, "| {} |", labels.join(" | "));
            let _ = writeln!(md, "|{}", "---|".repeat(labels.len()));
            let cells: Vec<String> = row
                .columns
                .iter()
                .map(|c| {
                    let v = fmt_ci(&c.rmse);
                    if c.label == row.best {
                        format!("**{v}**{}", if row.best_is_significant { "*" } else { "" })
                    } else {
                        v
                    }
                })
                .collect();
            let _ = writeln!(md, "| {} |", cells.join(" | "));
            let pvals: Vec<String> = row
                .columns
                .iter()
                .map(|c| c.p_value_vs_best.map_or("-".to_owned(), |p| format!("p={p:.4}")))
                .collect();
            let _ = writeln!(md, "| {} |\n", pvals.join(" | "));
        }
    }

    if !report.grid.is_empty() {
        let _ = writeln!(
            md,
            "## Mean (median) improvement %: rows = augmented rows V, columns = train size\n"
        );
        for ((strategy, _), cells) in group_by(&report.grid, |c| (c.strategy, eta_key(c.eta))) {
            let _ = writeln!(md, "### {strategy}, eta = {}\n", cells[0].eta);
            let mut sizes: Vec<&str> = Vec::new();
            let mut volumes: Vec<usize> = Vec::new();
            for c in &cells {
                if !sizes.contains(&c.train_size_label.as_str()) {
                    sizes.push(&c.train_size_label);
                }
                if !volumes.contains(&c.volume) {
                    volumes.push(c.volume);
                }
            }
            let _ = writeln!(md, "| V \\ train size | {} |", sizes.join(" | "));
            let _ = writeln!(md, "|---|{}", "---|".repeat(sizes.len()));
            for v in volumes {
                let row: Vec<String> =
                    sizes
                        .iter()
                        .map(|s| {
                            cells.iter().find(|c| c.volume == v && c.train_size_label == *s).map_or(
                                "-".to_owned(),
                                |c| match (c.mean_improvement_pct, c.median_improvement_pct) {
                                    (Some(m), Some(med)) => format!("{m:.2} ({med:.2})"),
                                    _ => "skipped".to_owned(),
                                },
                            )
                        })
                        .collect();
                let _ = writeln!(md, "| {v} | {} |", row.join(" | "));
            }
            md.push('\n');
        }
    }

    if !report.curve.is_empty() {
        let _ = writeln!(md, "## Baseline NRMSE by train size (mean ± 95% CI)\n");
        let _ = writeln!(md, "| dataset | train size | rows | NRMSE |\n|---|---|---|---|");
        for p in &report.curve {
            let _ = writeln!(
                md,
                "| {} | {} | {:.0} | {} |",
                p.dataset,
                p.train_size_label,
                p.mean_train_size,
                fmt_ci(&p.nrmse)
            );
        }
        md.push('\n');
    }

    if !report.distillation.is_empty() {
        let _ = writeln!(
            md,
            "## Teacher advantage vs augmentation gain (one point per dataset)\n"
        );
        let _ = writeln!(
            md,
            "| dataset | trials | teacher advantage % | teacher_noise improvement % | distill_only improvement % |\n|---|---|---|---|---|"
        );
        for p in &report.distillation {
            let _ = writeln!(
                md,
                "| {} | {} | {:.2} | {:.2} | {} |",
                p.dataset,
                p.n,
                p.teacher_advantage_pct,
                p.augmentation_improvement_pct,
                p.distill_only_improvement_pct
                    .map_or("-".to_owned(), |v| format!("{v:.2}"))
            );
        }
        md.push('\n');
    }

    if !report.overall.is_empty() {
        let _ = writeln!(md, "## Mean improvement % over all datasets and trials\n");
        let _ = writeln!(md, "| strategy | n | mean improvement % |\n|---|---|---|");
        for o in &report.overall {
            let _ = writeln!(md, "| {} | {} | {:.2} |", o.strategy, o.n, o.mean_improvement_pct);
        }
        md.push('\n');
    }

    if !report.configurations.is_empty() {
        let _ = writeln!(md, "## Per-configuration improvement %\n");
        let _ = writeln!(
            md,
            "| configuration | n | mean | median | std | 95% CI |\n|---|---|---|---|---|---|"
        );
        for c in &report.configurations {
            let s = &c.improvement_pct;
            let _ = writeln!(
                md,
                "| {} | {} | {:.2} | {:.2} | {:.2} | {} |",
                c.key,
                s.n,
                s.mean,
                s.median,
                s.std,
                s.ci95.map_or("-".to_owned(), |v| format!("{v:.2}"))
            );
        }
        md.push('\n');
    }

    if !report.skipped.is_empty() {
        let _ = writeln!(md, "## Skipped\n");
        for s in &report.skipped {
            let _ = writeln!(
                md,
                "- {} / {} / seed {}: {}",
                s.dataset, s.train_size_label, s.seed, s.reason
            );
        }
    }
    md
}

/// Writes `contents` to `path` through a temporary sibling and a rename, so the
/// target either holds the full contents or is untouched.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Writes `trials.csv`, `summary.json` and `tables.md` into `dir`, creating it if
/// needed. All contents are rendered before anything touches the disk.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        ("trials.csv", trials_csv(report)?),
        ("summary.json", summary_json(report)?),
        ("tables.md", tables_markdown(report)),
    ];
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        if let Err(e) = write_atomic(&path, text.as_bytes()) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}
