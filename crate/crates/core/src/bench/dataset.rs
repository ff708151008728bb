//! Dataset loaders. Malformed records are skipped and counted; only a missing
//! file or a file with no usable record is an error.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::canonical::{self, Value};
use crate::task::{Difficulty, IoMode, SourceBenchmark, TaskSpec, TestCase, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    HumanevalJsonl,
    LivecodebenchJsonl,
    CustomTaskspecJson,
}

impl DatasetKind {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "humaneval_jsonl" | "humaneval" => Some(DatasetKind::HumanevalJsonl),
            "livecodebench_jsonl" | "livecodebench" | "lcb" => Some(DatasetKind::LivecodebenchJsonl),
            "custom_taskspec_json" | "custom" => Some(DatasetKind::CustomTaskspecJson),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::HumanevalJsonl => "humaneval_jsonl",
            DatasetKind::LivecodebenchJsonl => "livecodebench_jsonl",
            DatasetKind::CustomTaskspecJson => "custom_taskspec_json",
        }
    }

    /// Guesses the kind from a file name.
    pub fn infer(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_string_lossy().to_ascii_lowercase();
        if name.ends_with(".json") {
            Some(DatasetKind::CustomTaskspecJson)
        } else if name.contains("humaneval") {
            Some(DatasetKind::HumanevalJsonl)
        } else if name.contains("livecodebench") || name.contains("lcb") {
            Some(DatasetKind::LivecodebenchJsonl)
        } else {
            None
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    DatasetNotFound(PathBuf),
    #[error("{path}: {detail}")]
    SchemaError { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Companion jsonl of extra tests merged into HumanEval tasks.
    pub extra_tests: Option<PathBuf>,
    /// Sidecar jsonl of `{task_id, category}` records.
    pub categories: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub source: String,
    /// 1-based line (jsonl) or record index (json array).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub kind: DatasetKind,
    pub tasks: Vec<TaskSpec>,
    pub skipped: Vec<SkippedRecord>,
}

fn read(path: &Path) -> Result<String, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::DatasetNotFound(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines of a jsonl file, parsed, with their 1-based line numbers.
fn jsonl(text: &str) -> Vec<(usize, Result<Json, String>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| format!("invalid JSON: {e}"))))
        .collect()
}

pub fn load_dataset(kind: DatasetKind, path: &Path, options: &LoadOptions) -> Result<LoadedDataset, DatasetError> {
    let text = read(path)?;
    let source = path.display().to_string();
    let mut skipped = Vec::new();
    let mut candidates: Vec<(usize, Result<TaskSpec, String>)> = match kind {
        DatasetKind::HumanevalJsonl => jsonl(&text)
            .into_iter()
            .map(|(line, r)| (line, r.and_then(|j| humaneval_task(&j))))
            .collect(),
        DatasetKind::LivecodebenchJsonl => jsonl(&text)
            .into_iter()
            .map(|(line, r)| (line, r.and_then(|j| livecodebench_task(&j))))
            .collect(),
        DatasetKind::CustomTaskspecJson => {
            let doc: Json = serde_json::from_str(&text).map_err(|e| DatasetError::SchemaError {
                path: path.to_path_buf(),
                detail: format!("invalid JSON: {e}"),
            })?;
            let records = match doc {
                Json::Array(items) => items,
                Json::Object(map) if map.contains_key("task_id") => vec![Json::Object(map)],
                Json::Object(mut map) => match map.remove("tasks") {
                    Some(Json::Array(items)) => items,
                    _ => {
                        return Err(DatasetError::SchemaError {
                            path: path.to_path_buf(),
                            detail: "expected a task, an array of tasks or an object with a `tasks` array".into(),
                        })
                    }
                },
                _ => {
                    return Err(DatasetError::SchemaError {
                        path: path.to_path_buf(),
                        detail: "expected an array of tasks".into(),
                    })
                }
            };
            records
                .into_iter()
                .enumerate()
                .map(|(i, j)| (i + 1, serde_json::from_value::<TaskSpec>(j).map_err(|e| e.to_string())))
                .collect()
        }
    };

    if kind == DatasetKind::HumanevalJsonl {
        if let Some(extra) = &options.extra_tests {
            let extras = load_extra_tests(extra, &mut skipped)?;
            for (_, task) in candidates.iter_mut() {
                if let Ok(t) = task {
                    if let Some(cases) = extras.get(&t.task_id) {
                        let base = t.test_suite.cases.len();
                        for (i, (input, expected)) in cases.iter().enumerate() {
                            t.test_suite
                                .cases
                                .insert(base.saturating_sub(1) + i, TestCase::io(input, expected, format!("plus{i}")));
                        }
                        t.source_benchmark = SourceBenchmark::HumanevalPlus;
                    }
                }
            }
        }
    }

    let categories = match &options.categories {
        Some(p) => load_categories(p, &mut skipped)?,
        None => HashMap::new(),
    };

    let total = candidates.len();
    let mut seen = HashSet::new();
    let mut tasks = Vec::new();
    for (line, task) in candidates.drain(..) {
        let result = task.and_then(|mut t| {
            if let Some(c) = categories.get(&t.task_id) {
                t.category = Some(c.clone());
            }
            t.validate().map_err(|e| e.to_string())?;
            if !seen.insert(t.task_id.clone()) {
                return Err(format!("duplicate task id `{}`", t.task_id));
            }
            Ok(t)
        });
        match result {
            Ok(t) => tasks.push(t),
            Err(reason) => {
                tracing::warn!(%source, line, %reason, "skipping malformed record");
                skipped.push(SkippedRecord {
                    source: source.clone(),
                    line,
                    reason,
                })
            }
        }
    }
    if tasks.is_empty() {
        return Err(DatasetError::SchemaError {
            path: path.to_path_buf(),
            detail: if total == 0 {
                "no records".into()
            } else {
                format!("none of {total} records is a valid task")
            },
        });
    }
    Ok(LoadedDataset { kind, tasks, skipped })
}

fn str_field<'a>(j: &'a Json, key: &str) -> Result<&'a str, String> {
    j.get(key)
        .and_then(Json::as_str)
        .ok_or_else(|| format!("missing string field `{key}`"))
}

/// Builds a task from a HumanEval record. The simple `assert candidate(...) == ...`
/// lines of the check become I/O cases (the first is the public sample), and the
/// whole check function becomes one assertion case used for scoring.
pub fn humaneval_task(j: &Json) -> Result<TaskSpec, String> {
    let task_id = str_field(j, "task_id")?.to_string();
    let prompt = str_field(j, "prompt")?;
    let test = str_field(j, "test")?;
    let entry = str_field(j, "entry_point")?;
    if entry.trim().is_empty() {
        return Err("empty entry_point".into());
    }
    if !test.contains("def check") {
        return Err("test has no `check` function".into());
    }
    let mut cases: Vec<TestCase> = simple_asserts(test)
        .into_iter()
        .enumerate()
        .map(|(i, (input, expected))| TestCase::io(input, expected, format!("assert{i}")))
        .collect();
    cases.push(TestCase::assertion(format!("{}\n\ncheck(candidate)\n", test.trim_end()), "check"));
    Ok(TaskSpec {
        task_id,
        description: prompt.to_string(),
        io_mode: IoMode::FunctionCall,
        entry_point: Some(entry.to_string()),
        test_suite: TestSuite {
            cases,
            edge_probes: Vec::new(),
        },
        starter_code: Some(prompt.to_string()),
        difficulty: None,
        category: None,
        source_benchmark: SourceBenchmark::Humaneval,
        complexity_budget: None,
    })
}

/// Canonical `(args, expected)` pairs from `assert candidate(ARGS) == EXPECTED` lines.
pub fn simple_asserts(test: &str) -> Vec<(String, String)> {
    test.lines()
        .filter_map(|line| {
            let rest = line.trim().strip_prefix("assert")?.trim_start();
            let rest = rest.strip_prefix("candidate(")?;
            let close = closing_paren(rest)?;
            let args = &rest[..close];
            let tail = rest[close + 1..].trim_start().strip_prefix("==")?;
            let expected = top_level_split(tail, ',').first()?.trim().to_string();
            let args = canonical::canonicalize_args(&format!("[{args}]")).ok()?;
            let expected = canonical::canonicalize(&expected).ok()?;
            Some((args, expected))
        })
        .collect()
}

/// Index of the `)` closing an already-opened paren, skipping string literals.
fn closing_paren(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' if depth == 0 => return Some(i),
            ')' | ']' | '}' => depth = depth.checked_sub(1)?,
            _ => {}
        }
    }
    None
}

fn top_level_split(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn json_to_value(j: &Json) -> Value {
    match j {
        Json::Null => Value::None,
        Json::Bool(b) => Value::Bool(*b),
        Json::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => Value::Int(i.to_string()),
            (_, Some(u)) => Value::Int(u.to_string()),
            _ => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Json::String(s) => Value::Str(s.clone()),
        Json::Array(items) => Value::List(items.iter().map(json_to_value).collect()),
        Json::Object(map) => Value::Dict(
            map.iter()
                .map(|(k, v)| (Value::Str(k.clone()), json_to_value(v)))
                .collect(),
        ),
    }
}

/// A field that may hold JSON directly or JSON encoded in a string.
fn embedded_json(j: &Json, key: &str) -> Option<Json> {
    match j.get(key)? {
        Json::String(s) => serde_json::from_str(s).ok(),
        Json::Null => None,
        other => Some(other.clone()),
    }
}

/// Builds a task from a LiveCodeBench record. Public test cases become the
/// suite; plain-JSON private cases are merged, compressed ones are ignored.
pub fn livecodebench_task(j: &Json) -> Result<TaskSpec, String> {
    let qid = match j.get("question_id") {
        Some(Json::String(s)) => s.clone(),
        Some(Json::Number(n)) => n.to_string(),
        _ => return Err("missing `question_id`".into()),
    };
    let content = str_field(j, "question_content")?;
    let title = j.get("question_title").and_then(Json::as_str).unwrap_or("");
    let public = match embedded_json(j, "public_test_cases") {
        Some(Json::Array(items)) if !items.is_empty() => items,
        _ => return Err("`public_test_cases` is missing or not a non-empty array".into()),
    };
    let private = match embedded_json(j, "private_test_cases") {
        Some(Json::Array(items)) => items,
        _ => Vec::new(),
    };
    let functional = public
        .iter()
        .any(|c| c.get("testtype").and_then(Json::as_str) == Some("functional"));
    let entry_point = if functional {
        let meta = embedded_json(j, "metadata").unwrap_or(Json::Null);
        Some(
            meta.get("func_name")
                .and_then(Json::as_str)
                .ok_or("functional test cases need metadata.func_name")?
                .to_string(),
        )
    } else {
        None
    };
    let mut cases = Vec::new();
    for (i, c) in public.iter().chain(private.iter()).enumerate() {
        let input = str_field(c, "input")?;
        let output = str_field(c, "output")?;
        let label = if i < public.len() {
            format!("public{i}")
        } else {
            format!("private{}", i - public.len())
        };
        if functional {
            let args: Result<Vec<Value>, String> = input
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str::<Json>(l).map(|v| json_to_value(&v)).map_err(|e| e.to_string()))
                .collect();
            let expected: Json = serde_json::from_str(output).map_err(|e| format!("case {label}: {e}"))?;
            cases.push(TestCase::io(
                Value::List(args?).render(),
                json_to_value(&expected).render(),
                label,
            ));
        } else {
            cases.push(TestCase::io(input, output, label));
        }
    }
    let description = if title.is_empty() {
        content.to_string()
    } else {
        format!("{title}\n\n{content}")
    };
    Ok(TaskSpec {
        task_id: format!("lcb/{qid}"),
        description,
        io_mode: if functional { IoMode::FunctionCall } else { IoMode::Stdio },
        entry_point,
        test_suite: TestSuite {
            cases,
            edge_probes: Vec::new(),
        },
        starter_code: j
            .get("starter_code")
            .and_then(Json::as_str)
            .filter(|s| !s.trim().is_empty())
            .map(str::to_string),
        difficulty: j.get("difficulty").and_then(Json::as_str).and_then(Difficulty::parse),
        category: None,
        source_benchmark: SourceBenchmark::Livecodebench,
        complexity_budget: None,
    })
}

fn load_extra_tests(
    path: &Path,
    skipped: &mut Vec<SkippedRecord>,
) -> Result<HashMap<String, Vec<(String, String)>>, DatasetError> {
    let text = read(path)?;
    let source = path.display().to_string();
    let mut out = HashMap::new();
    for (line, record) in jsonl(&text) {
        let parsed = record.and_then(|j| {
            let id = str_field(&j, "task_id")?.to_string();
            let tests = j
                .get("extra_tests")
                .and_then(Json::as_array)
                .ok_or("missing `extra_tests` array")?;
            let cases = tests
                .iter()
                .map(|t| {
                    let input = canonical::canonicalize_args(str_field(t, "input")?).map_err(|e| e.to_string())?;
                    let expected = canonical::canonicalize(str_field(t, "expected")?).map_err(|e| e.to_string())?;
                    Ok((input, expected))
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok((id, cases))
        });
        match parsed {
            Ok((id, cases)) => {
                out.insert(id, cases);
            }
            Err(reason) => skipped.push(SkippedRecord {
                source: source.clone(),
                line,
                reason,
            }),
        }
    }
    Ok(out)
}

fn load_categories(path: &Path, skipped: &mut Vec<SkippedRecord>) -> Result<HashMap<String, String>, DatasetError> {
    let text = read(path)?;
    let source = path.display().to_string();
    let mut out = HashMap::new();
    for (line, record) in jsonl(&text) {
        match record.and_then(|j| Ok((str_field(&j, "task_id")?.to_string(), str_field(&j, "category")?.to_string()))) {
            Ok((id, cat)) => {
                out.insert(id, cat);
            }
            Err(reason) => skipped.push(SkippedRecord {
                source: source.clone(),
                line,
                reason,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn simple_asserts_are_canonicalized() {
        let test = r#"
def check(candidate):
    assert candidate([1.0, 2.0, 3.9], 0.3) == True
    assert candidate("a,b", (1, 2)) == ['a', 'b'], "with message"
    assert abs(candidate(1.5) - 0.5) < 1e-6
    assert candidate(x) == 3
    for x in range(3):
        assert candidate(x) == x
"#;
        let got = simple_asserts(test);
        assert_eq!(
            got,
            vec![
                ("[[1.0,2.0,3.9],0.3]".to_string(), "True".to_string()),
                ("[\"a,b\",[1,2]]".to_string(), "[\"a\",\"b\"]".to_string()),
            ]
        );
    }

    #[test]
    fn humaneval_record_becomes_task() {
        let j = json!({
            "task_id": "HumanEval/0",
            "prompt": "def add(a, b):\n    \"\"\"Add.\"\"\"\n",
            "canonical_solution": "    return a + b\n",
            "test": "def check(candidate):\n    assert candidate(1, 2) == 3\n    assert candidate(0, 0) == 0\n",
            "entry_point": "add"
        });
        let t = humaneval_task(&j).unwrap();
        assert_eq!(t.test_suite.cases.len(), 3);
        assert_eq!(t.sample_case().unwrap().input, "[1,2]");
        assert!(t.test_suite.cases[2].input.ends_with("check(candidate)\n"));
        assert_eq!(t.redacted().test_suite.cases.len(), 1);
    }

    #[test]
    fn livecodebench_stdin_and_functional() {
        let j = json!({
            "question_id": "abc300_a",
            "question_title": "N-choice",
            "question_content": "Print the answer.",
            "public_test_cases": "[{\"input\": \"3\\n1 2 3\\n\", \"output\": \"6\\n\", \"testtype\": \"stdin\"}]",
            "private_test_cases": "eJzLSM3JyQcABiwCFQ==",
            "difficulty": "easy"
        });
        let t = livecodebench_task(&j).unwrap();
        assert_eq!(t.io_mode, IoMode::Stdio);
        assert_eq!(t.test_suite.cases.len(), 1);
        assert_eq!(t.difficulty, Some(Difficulty::Easy));

        let j = json!({
            "question_id": "3000",
            "question_content": "Return the sum.",
            "public_test_cases": [{"input": "[1, 2]\n3", "output": "true", "testtype": "functional"}],
            "metadata": "{\"func_name\": \"solve\"}",
            "difficulty": "medium"
        });
        let t = livecodebench_task(&j).unwrap();
        assert_eq!(t.entry_point.as_deref(), Some("solve"));
        assert_eq!(t.test_suite.cases[0].input, "[[1,2],3]");
        assert_eq!(t.test_suite.cases[0].expected, "True");
    }

    #[test]
    fn kind_names() {
        for k in [DatasetKind::HumanevalJsonl, DatasetKind::LivecodebenchJsonl, DatasetKind::CustomTaskspecJson] {
            assert_eq!(DatasetKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(DatasetKind::infer(Path::new("HumanEval.jsonl")), Some(DatasetKind::HumanevalJsonl));
        assert_eq!(DatasetKind::infer(Path::new("tasks.json")), Some(DatasetKind::CustomTaskspecJson));
    }
}
