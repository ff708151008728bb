//! Benchmark problems, test suites and candidate programs.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;

/// How a candidate program talks to its test harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoMode {
    /// The harness imports the program and calls `entry_point` with literal arguments.
    FunctionCall,
    /// The program reads stdin and writes stdout.
    Stdio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "easy" => Some(Difficulty::Easy),
            "medium" => Some(Difficulty::Medium),
            "hard" => Some(Difficulty::Hard),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceBenchmark {
    Humaneval,
    HumanevalPlus,
    Livecodebench,
    Custom,
}

/// What a test case checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// `input` is fed to the program and its output is compared with `expected`.
    #[default]
    Io,
    /// `input` is guest code run with the entry point bound to `candidate`;
    /// the case passes when it raises nothing. `expected` is unused.
    Assertion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    /// Canonical argument list for function calls, raw stdin for stdio,
    /// guest code for assertion cases.
    pub input: String,
    /// Canonical return value for function calls, exact stdout for stdio.
    #[serde(default)]
    pub expected: String,
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "is_io")]
    pub kind: CaseKind,
}

fn is_io(kind: &CaseKind) -> bool {
    *kind == CaseKind::Io
}

impl TestCase {
    pub fn io(input: impl Into<String>, expected: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected: expected.into(),
            label: label.into(),
            kind: CaseKind::Io,
        }
    }

    pub fn assertion(code: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            input: code.into(),
            expected: String::new(),
            label: label.into(),
            kind: CaseKind::Assertion,
        }
    }

    /// Whether `actual` (a canonical return value or captured stdout) satisfies
    /// this case under the comparison rule of `mode`.
    pub fn matches(&self, mode: IoMode, actual: &str) -> bool {
        match mode {
            IoMode::FunctionCall => canonical::values_equal(actual, &self.expected),
            IoMode::Stdio => canonical::normalize_stdout(actual) == canonical::normalize_stdout(&self.expected),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    #[serde(default)]
    pub cases: Vec<TestCase>,
    #[serde(default)]
    pub edge_probes: Vec<TestCase>,
}

impl TestSuite {
    /// The case with the longest input, used as the efficiency stress case.
    pub fn largest_case(&self) -> Option<&TestCase> {
        self.cases
            .iter()
            .chain(self.edge_probes.iter())
            .filter(|c| c.kind == CaseKind::Io)
            .max_by_key(|c| c.input.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub description: String,
    pub io_mode: IoMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
    pub test_suite: TestSuite,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starter_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub source_benchmark: SourceBenchmark,
    /// Declared asymptotic time budget, e.g. `O(n)`. Makes efficiency strict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_budget: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("task `{0}`: function_call tasks need a non-empty entry_point")]
    MissingEntryPoint(String),
    #[error("task `{0}`: test suite is empty")]
    EmptySuite(String),
    #[error("task `{task}`: case `{label}` expected value is not a canonical literal: {reason}")]
    BadExpectation { task: String, label: String, reason: String },
    #[error("task `{task}`: case `{label}` is an assertion case in a stdio task")]
    AssertionInStdio { task: String, label: String },
    #[error("duplicate task id `{0}`")]
    DuplicateId(String),
}

impl TaskSpec {
    /// Checks the type invariants. Function-call expectations are rewritten
    /// into canonical form so later comparisons are plain text equality.
    pub fn validate(&mut self) -> Result<(), TaskError> {
        if self.io_mode == IoMode::FunctionCall
            && self.entry_point.as_deref().map_or(true, |e| e.trim().is_empty())
        {
            return Err(TaskError::MissingEntryPoint(self.task_id.clone()));
        }
        if self.test_suite.cases.is_empty() {
            return Err(TaskError::EmptySuite(self.task_id.clone()));
        }
        let mode = self.io_mode;
        let task_id = self.task_id.clone();
        let suite = &mut self.test_suite;
        for case in suite.cases.iter_mut().chain(suite.edge_probes.iter_mut()) {
            match (mode, case.kind) {
                (IoMode::Stdio, CaseKind::Assertion) => {
                    return Err(TaskError::AssertionInStdio {
                        task: task_id,
                        label: case.label.clone(),
                    })
                }
                (IoMode::FunctionCall, CaseKind::Io) => {
                    let bad = |reason: String| TaskError::BadExpectation {
                        task: task_id.clone(),
                        label: case.label.clone(),
                        reason,
                    };
                    case.expected = canonical::canonicalize(&case.expected).map_err(|e| bad(e.to_string()))?;
                    case.input = canonical::canonicalize_args(&case.input).map_err(|e| bad(e.to_string()))?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// A copy safe to hand to the refinement loop: hidden cases are removed,
    /// keeping only the edge probes and the first (public) sample case.
    pub fn redacted(&self) -> TaskSpec {
        let mut view = self.clone();
        view.test_suite.cases = self
            .test_suite
            .cases
            .first()
            .filter(|c| c.kind == CaseKind::Io)
            .cloned()
            .into_iter()
            .collect();
        view
    }

    /// The first sample case, if it is an I/O case.
    pub fn sample_case(&self) -> Option<&TestCase> {
        self.test_suite.cases.first().filter(|c| c.kind == CaseKind::Io)
    }
}

/// Fails on the first repeated task id.
pub fn ensure_unique_ids(tasks: &[TaskSpec]) -> Result<(), TaskError> {
    let mut seen = HashSet::new();
    for task in tasks {
        if !seen.insert(task.task_id.as_str()) {
            return Err(TaskError::DuplicateId(task.task_id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    InitialDraft,
    GradientRevision,
}

/// One version of the program text being refined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub source: String,
    pub iteration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_iteration: Option<u32>,
    pub origin: Origin,
}

impl CandidateProgram {
    pub fn draft(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            iteration: 0,
            parent_iteration: None,
            origin: Origin::InitialDraft,
        }
    }

    /// A revision of `parent`. `iteration` must be greater than zero.
    pub fn revision(source: impl Into<String>, iteration: u32, parent: &CandidateProgram) -> Self {
        assert!(iteration > parent.iteration, "revision iteration must increase");
        Self {
            source: source.into(),
            iteration,
            parent_iteration: Some(parent.iteration),
            origin: Origin::GradientRevision,
        }
    }

    pub fn line_count(&self) -> usize {
        self.source.lines().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fn_task() -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            description: "d".into(),
            io_mode: IoMode::FunctionCall,
            entry_point: Some("f".into()),
            test_suite: TestSuite {
                cases: vec![TestCase::io("[ (1, 2) ]", "( 3 )", "a"), TestCase::io("[[5]]", "5", "b")],
                edge_probes: vec![TestCase::io("[[]]", "None", "empty")],
            },
            starter_code: None,
            difficulty: None,
            category: None,
            source_benchmark: SourceBenchmark::Custom,
            complexity_budget: None,
        }
    }

    #[test]
    fn validate_canonicalizes_function_call_cases() {
        let mut task = fn_task();
        task.validate().unwrap();
        assert_eq!(task.test_suite.cases[0].input, "[[1,2]]");
        assert_eq!(task.test_suite.cases[0].expected, "3");
        assert_eq!(task.test_suite.edge_probes[0].expected, "None");
    }

    #[test]
    fn function_call_needs_entry_point() {
        let mut task = fn_task();
        task.entry_point = Some("  ".into());
        assert_eq!(task.validate(), Err(TaskError::MissingEntryPoint("t".into())));
    }

    #[test]
    fn empty_suite_rejected() {
        let mut task = fn_task();
        task.test_suite.cases.clear();
        assert!(matches!(task.validate(), Err(TaskError::EmptySuite(_))));
    }

    #[test]
    fn redaction_keeps_first_case_and_probes() {
        let mut task = fn_task();
        task.validate().unwrap();
        let view = task.redacted();
        assert_eq!(view.test_suite.cases.len(), 1);
        assert_eq!(view.test_suite.cases[0].label, "a");
        assert_eq!(view.test_suite.edge_probes, task.test_suite.edge_probes);
    }

    #[test]
    fn redaction_drops_leading_assertion_case() {
        let mut task = fn_task();
        task.test_suite.cases.insert(0, TestCase::assertion("check(candidate)", "full"));
        assert!(task.redacted().test_suite.cases.is_empty());
    }

    #[test]
    fn duplicate_ids_detected() {
        let a = fn_task();
        let b = fn_task();
        assert_eq!(ensure_unique_ids(&[a, b]), Err(TaskError::DuplicateId("t".into())));
    }

    #[test]
    fn stdio_comparison_ignores_trailing_whitespace() {
        let case = TestCase::io("5\n1 2 3 -2 5\n", "9\n", "sample");
        assert!(case.matches(IoMode::Stdio, "9   \n\n"));
        assert!(!case.matches(IoMode::Stdio, " 9\n"));
    }

    #[test]
    #[should_panic]
    fn revision_iteration_must_increase() {
        let draft = CandidateProgram::draft("x");
        CandidateProgram::revision("y", 0, &draft);
    }
}
