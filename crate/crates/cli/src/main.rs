use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabaug_core::harness::{
    augment_dataset, emit_report, run_benchmark, run_distillation_analysis, run_grid, run_learning_curve,
};
use tabaug_core::{Error, ExperimentPlan, Report, RunOptions};

const EXIT_CODES: &str = "\
Exit codes:
  0  success, outputs written
  2  usage error (unknown flag, missing argument)
  3  plan file missing, malformed or invalid
  4  dataset error (unreadable file, bad cell, missing target column)
  5  runtime error (training failure, unwritable output)";

/// Teacher-labelled noise augmentation for tabular regression, with baseline
/// strategies and repeated-seed experiments.
#[derive(Debug, Parser)]
#[command(name = "tabaug", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Augment the plan's dataset with its first strategy, volume and eta and write the
    /// combined rows as CSV (with a `provenance` column).
    #[command(after_help = EXIT_CODES)]
    Augment(Common),
    /// Compare every strategy of the plan against the unaugmented baseline.
    #[command(after_help = EXIT_CODES)]
    Benchmark(Common),
    /// Improvement over the train-size x volume grid.
    #[command(after_help = EXIT_CODES)]
    Grid(Common),
    /// Baseline error against train size.
    #[command(after_help = EXIT_CODES)]
    Curve(Common),
    /// Teacher advantage against augmentation gain, with a distillation-only control.
    #[command(after_help = EXIT_CODES)]
    Distill(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment plan (JSON).
    #[arg(long, value_name = "PATH")]
    plan: PathBuf,
    /// Output CSV for `augment`; output directory for the experiment modes.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override the plan's base seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Override the plan's trial count.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    /// Worker threads for trials. Results do not depend on it.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Print a short summary to stderr.
    #[arg(long, short)]
    verbose: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Plan(_) => 3,
            e if e.is_data_error() => 4,
            _ => 5,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn load_plan(args: &Common) -> Result<ExperimentPlan, Failure> {
    let mut plan = ExperimentPlan::from_path(&args.plan)?;
    if let Some(seed) = args.seed {
        plan.base_seed = seed;
    }
    if let Some(trials) = args.trials {
        plan.trials = trials;
    }
    if let Some(out) = &args.out {
        plan.output_dir = out.clone();
    }
    plan.validate()?;
    Ok(plan)
}

fn augment(args: &Common) -> Result<(), Failure> {
    let plan = load_plan(args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| plan.output_dir.join("augmented.csv"));
    let aug = augment_dataset(&plan)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure {
            code: 5,
            message: format!("cannot create {}: {e}", parent.display()),
        })?;
    }
    aug.write_csv(&out)?;
    if args.verbose {
        eprintln!(
            "{} original + {} synthetic rows{}",
            aug.n_original,
            aug.provenance.len(),
            aug.teacher_model.map(|m| format!(", teacher {m}")).unwrap_or_default()
        );
    }
    println!("{}", out.display());
    Ok(())
}

fn experiment(
    args: &Common,
    run: fn(&ExperimentPlan, RunOptions) -> tabaug_core::Result<Report>,
) -> Result<(), Failure> {
    let plan = load_plan(args)?;
    let opts = RunOptions {
        jobs: args.jobs.map(|j| j as usize),
    };
    let report = run(&plan, opts)?;
    let written = emit_report(&report, &plan.output_dir)?;
    if args.verbose {
        eprintln!("{} trials, {} skipped", report.trials.len(), report.skipped.len());
        for o in &report.overall {
            eprintln!(
                "  {:<14} mean improvement {:>8.3}% over {}",
                o.strategy, o.mean_improvement_pct, o.n
            );
        }
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Augment(a) => augment(a),
        Command::Benchmark(a) => experiment(a, run_benchmark),
        Command::Grid(a) => experiment(a, run_grid),
        Command::Curve(a) => experiment(a, run_learning_curve),
        Command::Distill(a) => experiment(a, run_distillation_analysis),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
