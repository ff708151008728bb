mod common;

use std::io::Write as _;
use std::path::PathBuf;

use codegrad_core::bench::{load_dataset, DatasetError, DatasetKind, LoadOptions};
use codegrad_core::sandbox::{run_tests, ResourceLimits};
use codegrad_core::task::{CaseKind, IoMode, SourceBenchmark};
use common::*;

fn mini(options: &LoadOptions) -> codegrad_core::bench::LoadedDataset {
    load_dataset(DatasetKind::HumanevalJsonl, &fixture("humaneval_mini.jsonl"), options).unwrap()
}

fn solution(record: &serde_json::Value) -> String {
    format!("{}{}", record["prompt"].as_str().unwrap(), record["canonical_solution"].as_str().unwrap())
}

fn records() -> Vec<serde_json::Value> {
    std::fs::read_to_string(fixture("humaneval_mini.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn bundled_humaneval_fixture_loads_every_record() {
    let d = mini(&LoadOptions::default());
    assert_eq!(d.tasks.len(), 5);
    assert!(d.skipped.is_empty());
    let t = &d.tasks[0];
    assert_eq!((t.task_id.as_str(), t.entry_point.as_deref()), ("Mini/0", Some("max_subarray")));
    assert_eq!(t.test_suite.cases.first().unwrap().expected, "6");
    assert_eq!(t.test_suite.cases.last().unwrap().kind, CaseKind::Assertion);
}

#[test]
fn canonical_solutions_pass_and_stubs_fail() {
    let sb = sandbox();
    let l = ResourceLimits::default();
    for (task, rec) in mini(&LoadOptions::default()).tasks.iter().zip(records()) {
        assert!(run_tests(&sb, &solution(&rec), task, &l).unwrap().all_passed, "{}", task.task_id);
        let stub = format!("{}    return None\n", rec["prompt"].as_str().unwrap());
        assert!(!run_tests(&sb, &stub, task, &l).unwrap().all_passed, "{}", task.task_id);
    }
}

#[test]
fn sidecars_merge_categories_and_extra_tests() {
    let options = LoadOptions {
        extra_tests: Some(fixture("humaneval_mini_plus.jsonl")),
        categories: Some(fixture("humaneval_mini_categories.jsonl")),
    };
    let d = mini(&options);
    let fib = d.tasks.iter().find(|t| t.task_id == "Mini/4").unwrap();
    assert_eq!(fib.category.as_deref(), Some("math"));
    assert_eq!(fib.source_benchmark, SourceBenchmark::HumanevalPlus);
    let labels: Vec<&str> = fib.test_suite.cases.iter().map(|c| c.label.as_str()).collect();
    assert_eq!(&labels[labels.len() - 3..], ["plus0", "plus1", "check"]);
    let sb = sandbox();
    let rec = &records()[4];
    assert!(run_tests(&sb, &solution(rec), fib, &ResourceLimits::default()).unwrap().all_passed);
    assert_eq!(d.tasks.iter().filter(|t| t.source_benchmark == SourceBenchmark::HumanevalPlus).count(), 2);
}

#[test]
fn malformed_records_are_skipped_not_fatal() {
    let mut text = std::fs::read_to_string(fixture("humaneval_mini.jsonl")).unwrap();
    text.push_str("{\"task_id\": \"Mini/9\", \"prompt\": \"x\"}\n");
    text.push_str("not json at all\n");
    text.push_str(text.clone().lines().next().unwrap());
    text.push('\n');
    let mut f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    let d = load_dataset(DatasetKind::HumanevalJsonl, f.path(), &LoadOptions::default()).unwrap();
    assert_eq!(d.tasks.len(), 5);
    let lines: Vec<usize> = d.skipped.iter().map(|s| s.line).collect();
    assert_eq!(lines, [6, 7, 8]);
    assert!(d.skipped[2].reason.contains("duplicate"));
}

#[test]
fn missing_and_empty_files_are_errors() {
    let err = load_dataset(DatasetKind::HumanevalJsonl, &PathBuf::from("/nonexistent.jsonl"), &LoadOptions::default());
    assert!(matches!(err, Err(DatasetError::DatasetNotFound(_))));
    let f = tempfile::NamedTempFile::new().unwrap();
    let err = load_dataset(DatasetKind::HumanevalJsonl, f.path(), &LoadOptions::default());
    assert!(matches!(err, Err(DatasetError::SchemaError { .. })));
}

#[test]
fn livecodebench_records_cover_both_modes() {
    let d = load_dataset(DatasetKind::LivecodebenchJsonl, &fixture("livecodebench_mini.jsonl"), &LoadOptions::default())
        .unwrap();
    assert_eq!(d.tasks.len(), 2);
    assert_eq!(d.skipped.len(), 1);
    let stdin = &d.tasks[0];
    assert_eq!((stdin.task_id.as_str(), stdin.io_mode), ("lcb/abc001_a", IoMode::Stdio));
    let func = &d.tasks[1];
    assert_eq!(func.io_mode, IoMode::FunctionCall);
    assert_eq!(func.test_suite.cases[0].input, "[\"aaab\"]");

    let sb = sandbox();
    let l = ResourceLimits::default();
    assert!(run_tests(&sb, "a, b = map(int, input().split())\nprint(a + b)\n", stdin, &l).unwrap().all_passed);
    let method = "class Solution:\n    def longestRun(self, s: str) -> int:\n        best = run = 0\n        prev = None\n        for c in s:\n            run = run + 1 if c == prev else 1\n            prev = c\n            best = max(best, run)\n        return best\n";
    assert!(run_tests(&sb, method, func, &l).unwrap().all_passed);
}

#[test]
fn custom_taskspec_files_load() {
    let d = load_dataset(DatasetKind::CustomTaskspecJson, &fixture("max_subarray.json"), &LoadOptions::default());
    assert_eq!(d.unwrap().tasks.len(), 1);
    let body = std::fs::read_to_string(fixture("max_subarray.json")).unwrap();
    let mut f = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    write!(f, "{{\"tasks\": [{body}]}}").unwrap();
    let d = load_dataset(DatasetKind::CustomTaskspecJson, f.path(), &LoadOptions::default()).unwrap();
    assert_eq!(d.tasks[0].test_suite.cases.len(), 10);
}

/// Release files, checked only when present. Point `CODEGRAD_HUMANEVAL` and
/// `CODEGRAD_LCB` at them.
#[test]
fn release_files_have_the_published_sizes() {
    for (var, kind, want) in [
        ("CODEGRAD_HUMANEVAL", DatasetKind::HumanevalJsonl, 164),
        ("CODEGRAD_LCB", DatasetKind::LivecodebenchJsonl, 175),
    ] {
        let Some(path) = std::env::var_os(var).map(PathBuf::from).filter(|p| p.is_file()) else {
            eprintln!("{var} not set; skipping");
            continue;
        };
        let d = load_dataset(kind, &path, &LoadOptions::default()).unwrap();
        assert_eq!(d.tasks.len(), want, "{}", path.display());
    }
}
