//! Benchmark harness: dataset loading, hidden-test scoring, pass@1 and reports.

mod dataset;
mod report;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    humaneval_task, livecodebench_task, load_dataset, simple_asserts, DatasetError, DatasetKind, LoadOptions,
    LoadedDataset, SkippedRecord,
};
pub use report::{emit_report, format_with_change, ReportFormat, REPORT_SCHEMA_VERSION};

use crate::refine::{run_task, Engines, LoopContext, LoopError, RunConfig, TaskResult, TaskStatus};
use crate::sandbox::{run_tests, ResourceLimits, Sandbox, SandboxError};
use crate::task::TaskSpec;

/// `passed / total`, shown to three decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRate {
    pub passed: u32,
    pub total: u32,
}

impl PassRate {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.passed) / f64::from(self.total)
        }
    }
}

impl fmt::Display for PassRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.value())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("no task results to aggregate")]
pub struct EmptyRunSet;

/// Fraction of results whose final candidate passed the hidden tests.
/// Unscored results count as failures.
pub fn pass_at_1<'a, I>(results: I) -> Result<PassRate, EmptyRunSet>
where
    I: IntoIterator<Item = &'a TaskRow>,
{
    let mut rate = PassRate { passed: 0, total: 0 };
    for r in results {
        rate.total += 1;
        rate.passed += u32::from(r.passed);
    }
    if rate.total == 0 {
        Err(EmptyRunSet)
    } else {
        Ok(rate)
    }
}

/// Percentage change of `new` over `base`; `None` when `base` is zero.
pub fn relative_change(new: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| (new - base) / base * 100.0)
}

pub const UNLABELED: &str = "unlabeled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKey {
    Difficulty,
    Category,
}

/// Pass rate per bucket, buckets in lexicographic order. Missing labels go to `unlabeled`.
pub fn breakdown(rows: &[TaskRow], key: BreakdownKey) -> BTreeMap<String, PassRate> {
    let mut out: BTreeMap<String, PassRate> = BTreeMap::new();
    for r in rows {
        let label = match key {
            BreakdownKey::Difficulty => r.difficulty.clone(),
            BreakdownKey::Category => r.category.clone(),
        }
        .filter(|l| !l.trim().is_empty())
        .unwrap_or_else(|| UNLABELED.to_string());
        let e = out.entry(label).or_insert(PassRate { passed: 0, total: 0 });
        e.total += 1;
        e.passed += u32::from(r.passed);
    }
    out
}

/// Per-task summary line of a benchmark run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    #[serde(default)]
    pub difficulty: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
    pub status: TaskStatus,
    pub passed: bool,
    pub iterations: u32,
    pub forward_calls: u32,
    pub backward_calls: u32,
    pub judge_calls: u32,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskRow {
    pub fn new(task: &TaskSpec, result: &TaskResult) -> Self {
        Self {
            task_id: result.task_id.clone(),
            difficulty: task.difficulty.map(|d| d.as_str().to_string()),
            category: task.category.clone(),
            status: result.status,
            passed: result.final_tests_passed == Some(true),
            iterations: result.trace.len().saturating_sub(1) as u32,
            forward_calls: result.engine_calls.forward,
            backward_calls: result.engine_calls.backward,
            judge_calls: result.engine_calls.judge,
            wall_ms: result.wall_ms,
            error: result.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: String,
    pub label: String,
    pub dataset: String,
    pub config: RunConfig,
    pub rows: Vec<TaskRow>,
    pub skipped_records: usize,
    pub overall: PassRate,
    pub by_difficulty: BTreeMap<String, PassRate>,
    pub by_category: BTreeMap<String, PassRate>,
}

impl BenchReport {
    pub fn new(
        label: impl Into<String>,
        dataset: impl Into<String>,
        config: RunConfig,
        rows: Vec<TaskRow>,
        skipped_records: usize,
    ) -> Result<Self, EmptyRunSet> {
        let overall = pass_at_1(&rows)?;
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION.to_string(),
            label: label.into(),
            dataset: dataset.into(),
            by_difficulty: breakdown(&rows, BreakdownKey::Difficulty),
            by_category: breakdown(&rows, BreakdownKey::Category),
            config,
            rows,
            skipped_records,
            overall,
        })
    }
}

/// Runs the final candidate against the full (hidden) suite and records the outcome.
pub fn score_task(
    sandbox: &Sandbox,
    task: &TaskSpec,
    result: &mut TaskResult,
    limits: &ResourceLimits,
) -> Result<bool, SandboxError> {
    let source = &result.final_candidate.source;
    let passed = if source.trim().is_empty() {
        false
    } else {
        run_tests(sandbox, source, task, limits)?.all_passed
    };
    result.final_tests_passed = Some(passed);
    Ok(passed)
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Runs and scores every task on up to `jobs` worker threads. Results keep task order.
pub fn run_bench(
    ctx: &LoopContext<'_>,
    engines: &Engines,
    tasks: &[TaskSpec],
    jobs: usize,
) -> Result<Vec<TaskResult>, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let limits = &ctx.config.sandbox_limits;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let mut result = run_task(ctx, engines, task)?;
                score_task(ctx.sandbox, task, &mut result, limits)?;
                tracing::info!(task = %task.task_id, status = result.status.as_str(), passed = ?result.final_tests_passed, "task finished");
                Ok(result)
            })
            .collect()
    })
}

/// Default worker count: the number of CPUs, capped at 8.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}
