use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use codegrad_cli::{run_cli, EXIT_CONFIG, EXIT_OK, EXIT_TASK_FAILED};
use proptest::prelude::*;

const KADANE: &str = "def max_subarray(nums):\n    best = current = nums[0]\n    for x in nums[1:]:\n        current = max(x, current + x)\n        best = max(best, current)\n    return best\n";
const ZERO_SEED: &str = "def max_subarray(nums):\n    best = 0\n    for x in nums:\n        best = max(best, x)\n    return best\n";
const BROKEN: &str = "def max_subarray(nums):\n    return (\n";
const FAILING_REVIEW: &str = "[CORRECTNESS] verdict: fail\nWrong on negatives.\n[IO_FORMAT] verdict: pass\n[EFFICIENCY] verdict: pass\n[COMPLETENESS] verdict: fail\nEDITS:\n1. location: line 2 / action: seed best with nums[0] / axis: completeness\n";
const PASSING_REVIEW: &str = "[CORRECTNESS] verdict: pass\n[IO_FORMAT] verdict: pass\n[EFFICIENCY] verdict: pass\n[COMPLETENESS] verdict: pass\nEDITS:\n";
const HOLDS_PROOF: &str = "[INVARIANT syntax]\nok\nHOLDS\n[INVARIANT io_format]\nok\nHOLDS\n[INVARIANT efficiency]\nok\nHOLDS\n[INVARIANT completeness]\nok\nHOLDS\n";

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codegrad"))
}

fn fenced(code: &str) -> String {
    format!("```python\n{}\n```", code.trim_end())
}

fn transcript(forward: &[String], backward: &[String]) -> String {
    let mut out = String::new();
    for f in forward {
        out.push_str(&format!("=== forward ===\n{f}\n"));
    }
    for b in backward {
        out.push_str(&format!("=== backward ===\n{b}\n"));
    }
    out
}

/// Draft-only transcript for the mini HumanEval fixture: canonical solutions
/// for the tasks in `solved`, `return None` stubs elsewhere.
fn mini_drafts(solved: &[usize]) -> String {
    let text = fs::read_to_string(fixture("humaneval_mini.jsonl")).unwrap();
    let drafts: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let rec: serde_json::Value = serde_json::from_str(line).unwrap();
            let prompt = rec["prompt"].as_str().unwrap();
            let body = if solved.contains(&i) { rec["canonical_solution"].as_str().unwrap() } else { "    return None\n" };
            fenced(&format!("{prompt}{body}"))
        })
        .collect();
    transcript(&drafts, &[])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_replays_the_walkthrough_and_exits_zero() {
    let out = bin()
        .args(["solve", "--task", s(&fixture("max_subarray.json"))])
        .args(["--scripted-transcript", s(&fixture("walkthrough_transcript.txt"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let trace: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(trace["status"], "accepted");
    assert_eq!(trace["final_candidate"]["iteration"], 1);
    assert_eq!(trace["final_tests_passed"], true);
    assert_eq!(trace["config"]["forward"]["kind"], "scripted");
    assert_eq!(trace["config"]["max_iterations"], 2);
}

#[test]
fn null_bench_reports_baseline_drafts_for_every_task() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("drafts.txt");
    fs::write(&t, mini_drafts(&[0, 1, 2, 3, 4])).unwrap();
    let out_dir = dir.path().join("null");
    let out = bin()
        .args(["bench", "--dataset", s(&fixture("humaneval_mini.jsonl")), "--format", "humaneval_jsonl"])
        .args(["--backward", "none", "--scripted-transcript", s(&t), "--out", s(&out_dir)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["status"] == "baseline_draft" && r["forward_calls"] == 1));
    assert_eq!(report["overall"]["passed"], 5);
    assert_eq!(report["label"], "null");
    assert!(report["config"]["backward"].is_null());
    assert_eq!(fs::read_to_string(out_dir.join("traces.jsonl")).unwrap().lines().count(), 5);
    assert!(fs::read_to_string(out_dir.join("report.csv")).unwrap().lines().count() > 5);
}

#[test]
fn report_against_a_baseline_shows_arrows() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (name, solved) in [("null", vec![0]), ("run", vec![0, 2, 4])] {
        let t = dir.path().join(format!("{name}.txt"));
        fs::write(&t, mini_drafts(&solved)).unwrap();
        let out_dir = dir.path().join(name);
        let code = run_cli([
            "codegrad",
            "bench",
            "--dataset",
            s(&fixture("humaneval_mini.jsonl")),
            "--categories",
            s(&fixture("humaneval_mini_categories.jsonl")),
            "--backward",
            "none",
            "--label",
            name,
            "--scripted-transcript",
            s(&t),
            "--out",
            s(&out_dir),
        ]);
        assert_eq!(code, EXIT_OK);
        runs.push(out_dir.join("report.json"));
    }
    let md = dir.path().join("diff.md");
    let out = bin()
        .args(["report", "--in", s(&runs[1]), "--baseline", s(&runs[0]), "--format", "markdown", "--out", s(&md)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(md).unwrap();
    assert!(text.contains("0.600↑200.0%"), "{text}");
    assert!(text.contains('↓') || text.contains('→') || text.contains('↑'));
    assert!(text.contains("strings"), "{text}");
}

#[test]
fn configuration_problems_exit_two() {
    let task = fixture("max_subarray.json");
    let transcript = fixture("walkthrough_transcript.txt");
    let dataset = fixture("humaneval_mini.jsonl");
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["solve"],
        vec!["solve", "--task", "/nonexistent/task.json", "--backward", "none"],
        vec!["solve", "--task", s(&task), "--config", "/nonexistent/config.json"],
        vec!["solve", "--task", s(&task), "--max-iterations", "99"],
        vec!["solve", "--task", s(&task), "--strict-efficiency", "--lenient-efficiency"],
        vec!["solve", "--task", s(&task), "--interpreter", "/nonexistent/python", "--scripted-transcript", s(&transcript)],
        vec!["bench", "--dataset", s(&dataset), "--filter", "nope", "--backward", "none"],
        vec!["report", "--in", s(&task), "--format", "html"],
    ];
    for argv in cases {
        let out = bin().args(&argv).output().unwrap();
        assert_eq!(out.status.code(), Some(EXIT_CONFIG), "{argv:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"max_iterations": 0, "probes_enabled": false}"#).unwrap();
    let out_file = dir.path().join("trace.json");
    let code = run_cli([
        "codegrad",
        "solve",
        "--task",
        s(&fixture("max_subarray.json")),
        "--config",
        s(&cfg),
        "--max-iterations",
        "2",
        "--scripted-transcript",
        s(&fixture("walkthrough_transcript.txt")),
        "--out",
        s(&out_file),
    ]);
    assert_eq!(code, EXIT_OK);
    let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_file).unwrap()).unwrap();
    assert_eq!(trace["config"]["max_iterations"], 2);
    assert_eq!(trace["config"]["probes_enabled"], false);
}

#[test]
fn probe_reports_matches_and_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.py");
    let bad = dir.path().join("bad.py");
    fs::write(&good, KADANE).unwrap();
    fs::write(&bad, ZERO_SEED).unwrap();
    let task = fixture("max_subarray.json");
    let out = bin().args(["probe", "--task", s(&task), "--source", s(&good)]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MATCHED"));
    let out = bin().args(["probe", "--task", s(&task), "--source", s(&bad), "--all"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_TASK_FAILED));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}

fn response() -> impl Strategy<Value = (bool, String)> {
    prop_oneof![
        Just((true, fenced(KADANE))),
        Just((true, fenced(ZERO_SEED))),
        Just((true, fenced(BROKEN))),
        Just((true, HOLDS_PROOF.to_string())),
        Just((false, FAILING_REVIEW.to_string())),
        Just((false, PASSING_REVIEW.to_string())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    /// Whatever the transcript makes of the run, exit 0 means the trace says
    /// accepted or baseline_draft and exit 1 means unverified_best.
    #[test]
    fn solve_exit_code_follows_the_reported_status(
        responses in prop::collection::vec(response(), 1..7),
        n in 0u32..3,
        null in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let forward: Vec<String> = responses.iter().filter(|r| r.0).map(|r| r.1.clone()).collect();
        let backward: Vec<String> = responses.iter().filter(|r| !r.0).map(|r| r.1.clone()).collect();
        let t = dir.path().join("t.txt");
        fs::write(&t, transcript(&forward, &backward)).unwrap();
        let out = dir.path().join("trace.json");
        let n = n.to_string();
        let task = fixture("max_subarray.json");
        let mut argv = vec![
            "codegrad", "solve", "--task", s(&task),
            "--scripted-transcript", s(&t), "--max-iterations", &n, "--out", s(&out),
        ];
        if null {
            argv.extend(["--backward", "none"]);
        }
        let code = run_cli(argv);
        if forward.is_empty() && backward.is_empty() {
            prop_assert_eq!(code, EXIT_CONFIG);
            return Ok(());
        }
        let trace: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        let want = match trace["status"].as_str().unwrap() {
            "accepted" | "baseline_draft" => EXIT_OK,
            "unverified_best" => EXIT_TASK_FAILED,
            other => panic!("unexpected status {other}"),
        };
        prop_assert_eq!(code, want);
    }
}
