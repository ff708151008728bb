mod common;

use codegrad_core::engine::{ChatEngine, PromptSettings, PromptTemplates, ScriptedEngine};
use codegrad_core::sandbox::{ResourceLimits, Sandbox};
use codegrad_core::task::{CandidateProgram, IoMode, TaskSpec, TestCase};
use codegrad_core::verify::{
    check_completeness, check_efficiency_runtime, check_io_format, check_syntax, invariant_set, parse_proof,
    InvariantId, ProofDocument, Verifier, DEFAULT_STRICT,
};
use common::*;

fn verifier<'a>(
    sb: &'a Sandbox,
    templates: &'a PromptTemplates,
    task: &TaskSpec,
    judge: Option<&'a dyn ChatEngine>,
    strict_efficiency: bool,
    lenient: bool,
) -> Verifier<'a> {
    Verifier {
        sandbox: sb,
        limits: ResourceLimits::default(),
        invariants: invariant_set(&DEFAULT_STRICT, task, strict_efficiency),
        judge,
        templates,
        settings: PromptSettings::default(),
        lenient_efficiency: lenient,
    }
}

fn holds() -> ProofDocument {
    parse_proof(HOLDS_PROOF, &InvariantId::ALL)
}

fn big_task(n: usize, budget: Option<&str>) -> TaskSpec {
    let mut task = load_task("max_subarray.json").redacted();
    let nums: Vec<String> = (0..n).map(|i| ((i * 7919) % 201) as i64 - 100).map(|x| x.to_string()).collect();
    let parsed: Vec<i64> = nums.iter().map(|s| s.parse().unwrap()).collect();
    let want = {
        let (mut best, mut cur) = (parsed[0], parsed[0]);
        for &x in &parsed[1..] {
            cur = x.max(cur + x);
            best = best.max(cur);
        }
        best
    };
    task.test_suite
        .edge_probes
        .push(TestCase::io(format!("[[{}]]", nums.join(",")), want.to_string(), "large"));
    task.complexity_budget = budget.map(str::to_string);
    task.validate().unwrap();
    task
}

#[test]
fn walkthrough_revision_is_accepted() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = load_task("max_subarray.json").redacted();
    let v = verifier(&sb, &t, &task, None, false, false);
    let run = v.verify(&CandidateProgram::draft(KADANE), &holds(), &task).unwrap();
    assert!(run.verdict.accepted);
    assert!(run.verdict.proof_ok);
    // four passed checks plus the one edge probe
    assert_eq!(run.verdict.score, 5);
}

#[test]
fn missing_proof_section_rejects() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = load_task("max_subarray.json").redacted();
    let v = verifier(&sb, &t, &task, None, false, false);
    let proof = parse_proof(&HOLDS_PROOF.replace("[INVARIANT completeness]", "[INVARIANT nothing]"), &InvariantId::ALL);
    let run = v.verify(&CandidateProgram::draft(KADANE), &proof, &task).unwrap();
    assert!(!run.verdict.accepted);
    assert!(!run.verdict.proof_ok);
    let evidence = run.verdict.rejection_evidence(&proof);
    assert!(evidence.iter().any(|(id, text)| *id == InvariantId::Completeness && !text.is_empty()));
}

#[test]
fn wrong_draft_fails_completeness_with_evidence() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = load_task("max_subarray.json").redacted();
    let v = verifier(&sb, &t, &task, None, false, false);
    let run = v.verify(&CandidateProgram::draft(CUBIC_ZERO_SEED), &holds(), &task).unwrap();
    assert!(!run.verdict.accepted);
    let c = run.verdict.outcome(InvariantId::Completeness).unwrap();
    assert!(!c.passed && c.evidence.contains("all negative"), "{}", c.evidence);
    assert!(run.verdict.outcomes.iter().filter(|o| o.strict).any(|o| !o.passed));
}

#[test]
fn syntax_failure_skips_the_rest() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = load_task("max_subarray.json").redacted();
    let v = verifier(&sb, &t, &task, None, false, false);
    for src in ["def max_subarray(nums)\n    return 0\n", "", "   \n"] {
        let run = v.verify(&CandidateProgram::draft(src), &holds(), &task).unwrap();
        assert!(!run.verdict.accepted);
        assert_eq!(run.verdict.score, 0);
        assert!(run.verdict.outcomes.iter().all(|o| !o.passed));
    }
}

#[test]
fn cubic_scan_times_out_on_a_large_case() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = big_task(2000, None);
    let l = ResourceLimits::default();
    let slow = check_efficiency_runtime(&sb, CUBIC_ZERO_SEED, &task, &l).unwrap();
    assert!(!slow.passed, "{}", slow.evidence);
    let fast = check_efficiency_runtime(&sb, KADANE, &task, &l).unwrap();
    assert!(fast.passed, "{}", fast.evidence);

    let v = verifier(&sb, &t, &task, None, true, false);
    let run = v.verify(&CandidateProgram::draft(KADANE), &holds(), &task).unwrap();
    assert!(run.verdict.accepted);
}

#[test]
fn judge_enforces_a_declared_budget() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = big_task(50, Some("O(n)"));
    let cases = [
        ("The three loops dominate.\nCOMPLEXITY: O(n^3)", false, false),
        ("COMPLEXITY: O(n^3)", true, true),
        ("Linear pass.\nCOMPLEXITY: O(n)", false, true),
        ("I am not sure.", false, true),
    ];
    for (reply, lenient, expect_pass) in cases {
        let judge = ScriptedEngine::new("judge", vec![reply.to_string()]);
        let v = verifier(&sb, &t, &task, Some(&judge), false, lenient);
        let run = v.verify(&CandidateProgram::draft(KADANE), &holds(), &task).unwrap();
        let e = run.verdict.outcome(InvariantId::Efficiency).unwrap();
        assert!(e.strict);
        assert_eq!(e.passed, expect_pass, "{reply}: {}", e.evidence);
        assert_eq!(run.judge_exchanges.len(), 1);
        if lenient {
            assert!(e.evidence.contains("advisory"));
        }
    }
}

#[test]
fn io_format_catches_calling_convention_errors() {
    let sb = sandbox();
    let l = ResourceLimits::default();
    let task = load_task("max_subarray.json").redacted();
    assert!(check_io_format(&sb, KADANE, &task, &l).unwrap().passed);
    let renamed = KADANE.replace("def max_subarray", "def maxSubArray");
    assert!(!check_io_format(&sb, &renamed, &task, &l).unwrap().passed);
    let arity = "def max_subarray(nums, k):\n    return 0\n";
    assert!(!check_io_format(&sb, arity, &task, &l).unwrap().passed);
    // A wrong answer is a completeness problem, not a format one.
    assert!(check_io_format(&sb, "def max_subarray(nums):\n    return 0\n", &task, &l).unwrap().passed);

    let stdio = load_task("max_subarray_stdio.json").redacted();
    assert_eq!(stdio.io_mode, IoMode::Stdio);
    let good = "n = int(input())\nxs = list(map(int, input().split()))\nb = c = xs[0]\nfor x in xs[1:]:\n    c = max(x, c + x)\n    b = max(b, c)\nprint(b)\n";
    assert!(check_io_format(&sb, good, &stdio, &l).unwrap().passed);
    let overreads = "input()\ninput()\ninput()\nprint(0)\n";
    assert!(!check_io_format(&sb, overreads, &stdio, &l).unwrap().passed);
    let silent = "input()\n";
    assert!(!check_io_format(&sb, silent, &stdio, &l).unwrap().passed);
    let chatty = "print(1)\nprint(2)\n";
    assert!(!check_io_format(&sb, chatty, &stdio, &l).unwrap().passed);
}

#[test]
fn syntax_check_uses_the_guest_compiler() {
    let sb = sandbox();
    let l = ResourceLimits::default();
    assert!(check_syntax(&sb, KADANE, &l).unwrap().passed);
    assert!(check_syntax(&sb, "x = 1\nprint(x", &l).unwrap().evidence.contains("does not compile"));
    assert_eq!(check_syntax(&sb, "", &l).unwrap().evidence, "empty program");
}

#[test]
fn completeness_matches_a_brute_force_oracle() {
    let sb = sandbox();
    let l = ResourceLimits::default();
    let mut task = load_task("max_subarray.json").redacted();
    let inputs: [&[i64]; 5] = [&[-3, -1, -2], &[0], &[4, -9, 4], &[1, 2, 3], &[-1, 5, -1, 5]];
    task.test_suite.edge_probes = inputs
        .iter()
        .map(|xs| {
            let args = format!("[[{}]]", xs.iter().map(i64::to_string).collect::<Vec<_>>().join(","));
            TestCase::io(args, brute_max_subarray(xs).to_string(), "")
        })
        .collect();
    task.validate().unwrap();
    let programs = [
        (KADANE, true),
        (CUBIC_ZERO_SEED, false),
        ("def max_subarray(nums):\n    return max(nums)\n", false),
        ("def max_subarray(nums):\n    return max(sum(nums[i:j]) for i in range(len(nums)) for j in range(i + 1, len(nums) + 1))\n", true),
    ];
    for (src, want) in programs {
        let (o, report) = check_completeness(&sb, src, &task, &l).unwrap();
        assert_eq!(o.passed, want, "{src}: {}", o.evidence);
        assert_eq!(report.unwrap().probes.len(), 6);
    }
}

#[test]
fn verdicts_are_deterministic() {
    let sb = sandbox();
    let t = PromptTemplates::builtin();
    let task = load_task("max_subarray.json").redacted();
    let v = verifier(&sb, &t, &task, None, false, false);
    let a = v.verify(&CandidateProgram::draft(CUBIC_ZERO_SEED), &holds(), &task).unwrap().verdict;
    let b = v.verify(&CandidateProgram::draft(CUBIC_ZERO_SEED), &holds(), &task).unwrap().verdict;
    assert_eq!(a, b);
}
