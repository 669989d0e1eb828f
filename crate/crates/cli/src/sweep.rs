//! One run per config file in a directory, then a joined summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use snapens::ensemble::{self, Order};
use snapens::schedule::ScheduleKind;
use snapens::store;

use crate::commands::{self, TrainOutcome};
use crate::CliError;

pub const CONFIG_EXT: &str = "cfg";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// 1-based position in file-name order.
    pub run: usize,
    pub config: String,
    pub mode: String,
    /// Cycle count for cyclic schedules, snapshot count otherwise.
    pub cycles: usize,
    pub epochs: usize,
    pub seed: u64,
    pub snapshots: usize,
    /// All snapshots averaged, evaluated on the run's test split.
    pub ensemble_error: f64,
    pub final_error: f64,
    pub best_member_error: f64,
}

pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == CONFIG_EXT))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!("no .{CONFIG_EXT} files in {}", dir.display())));
    }
    Ok(files)
}

fn summarize(run: usize, path: &Path, outcome: &TrainOutcome) -> Result<SweepRow, CliError> {
    let (_, records) = store::load_run(&outcome.manifest)?;
    let test = snapens::data::load_csv(&outcome.dir.join(commands::TEST_DATA_FILE), "label")?;
    let preds = ensemble::predict_all(&records, &test)?;
    let all = ensemble::ensemble_eval_predictions(&preds, test.labels(), preds.len(), Order::Latest)?;
    let cfg = &outcome.config;
    let cycles = match cfg.schedule_kind {
        ScheduleKind::CyclicCosine { cycles } => cycles,
        _ => records.len(),
    };
    Ok(SweepRow {
        run,
        config: path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        mode: cfg.mode.name().to_string(),
        cycles,
        epochs: cfg.epochs,
        seed: cfg.seed,
        snapshots: records.len(),
        ensemble_error: all.ensemble_error,
        final_error: *all.member_errors.last().expect("non-empty"),
        best_member_error: all.member_errors.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Trains every config in `dir` using up to `jobs` threads and returns the
/// summary rows in file-name order. Nothing is summarized until every run has
/// finished.
pub fn run_sweep(dir: &Path, jobs: usize) -> Result<Vec<SweepRow>, CliError> {
    let files = config_files(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let outcomes: Vec<Result<TrainOutcome, CliError>> =
        pool.install(|| files.par_iter().map(|f| commands::train(f)).collect());
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    files
        .iter()
        .zip(&outcomes)
        .enumerate()
        .map(|(i, (f, o))| summarize(i + 1, f, o))
        .collect()
}

/// Numeric summary, one row per run:
/// `run,cycles,epochs,seed,snapshots,ensemble_error,final_error,best_member_error`.
pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("run,cycles,epochs,seed,snapshots,ensemble_error,final_error,best_member_error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run, r.cycles, r.epochs, r.seed, r.snapshots, r.ensemble_error, r.final_error, r.best_member_error
        );
    }
    out
}

/// `run<TAB>mode<TAB>config` lines naming what each summary row came from.
pub fn run_index(rows: &[SweepRow]) -> String {
    rows.iter()
        .map(|r| format!("{}\t{}\t{}\n", r.run, r.mode, r.config))
        .collect()
}

pub const RUN_INDEX_FILE: &str = "runs.txt";
