//! Mechanical invariant checks and the acceptance gate.
//!
//! A revision is accepted only when every strict invariant passes its check
//! and the accompanying proof claims `HOLDS` for each of them.

mod complexity;
mod proof;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use complexity::{parse_complexity, parse_judgment, Complexity};
pub use proof::{argument_is_well_formed, parse_proof, render_proof, ClaimVerdict, ProofClaim, ProofDocument};

use crate::engine::{exchange, ChatEngine, Exchange, Phase, PromptInputs, PromptSettings, PromptTemplates};
use crate::sandbox::{
    run_probes, visible_probes, ExecRequest, ExecStatus, ExecutionReport, ProbeReport, ResourceLimits, Sandbox,
    SandboxError,
};
use crate::task::{CandidateProgram, CaseKind, IoMode, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantId {
    Syntax,
    IoFormat,
    Efficiency,
    Completeness,
}

impl InvariantId {
    pub const ALL: [InvariantId; 4] = [
        InvariantId::Syntax,
        InvariantId::IoFormat,
        InvariantId::Efficiency,
        InvariantId::Completeness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InvariantId::Syntax => "syntax",
            InvariantId::IoFormat => "io_format",
            InvariantId::Efficiency => "efficiency",
            InvariantId::Completeness => "completeness",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "syntax" => Some(InvariantId::Syntax),
            "io_format" | "io" => Some(InvariantId::IoFormat),
            "efficiency" => Some(InvariantId::Efficiency),
            "completeness" => Some(InvariantId::Completeness),
            _ => None,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            InvariantId::Syntax => "the program parses and compiles as Python 3",
            InvariantId::IoFormat => "the program follows the input/output contract (entry point, arity, stdin/stdout shape)",
            InvariantId::Efficiency => "the program finishes the largest visible input within the resource limits",
            InvariantId::Completeness => "the program produces the expected result on every visible edge-case probe",
        }
    }
}

impl fmt::Display for InvariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Invariants that block acceptance unless configured otherwise.
pub const DEFAULT_STRICT: [InvariantId; 3] = [InvariantId::Syntax, InvariantId::IoFormat, InvariantId::Completeness];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantSpec {
    pub id: InvariantId,
    pub description: String,
    pub strict: bool,
}

/// All four invariants, with strictness resolved for `task`. Efficiency is
/// strict when listed, when the task declares a complexity budget, or when
/// `strict_efficiency` is set.
pub fn invariant_set(strict: &[InvariantId], task: &TaskSpec, strict_efficiency: bool) -> Vec<InvariantSpec> {
    InvariantId::ALL
        .iter()
        .map(|&id| {
            let forced = id == InvariantId::Efficiency && (strict_efficiency || task.complexity_budget.is_some());
            InvariantSpec {
                id,
                description: id.description().to_string(),
                strict: strict.contains(&id) || forced,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantOutcome {
    pub invariant: InvariantId,
    pub strict: bool,
    pub passed: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub accepted: bool,
    pub outcomes: Vec<InvariantOutcome>,
    /// Every strict invariant is claimed `HOLDS` in the proof.
    pub proof_ok: bool,
    /// Passed invariant checks plus matched edge probes.
    pub score: u32,
}

impl VerificationVerdict {
    pub fn outcome(&self, id: InvariantId) -> Option<&InvariantOutcome> {
        self.outcomes.iter().find(|o| o.invariant == id)
    }

    /// Evidence of every failed strict check and unproven strict claim, one per line.
    pub fn rejection_evidence(&self, proof: &ProofDocument) -> Vec<(InvariantId, String)> {
        let mut out = Vec::new();
        for o in self.outcomes.iter().filter(|o| o.strict) {
            if !o.passed {
                out.push((o.invariant, o.evidence.clone()));
            } else if !proof.holds(o.invariant) {
                out.push((
                    o.invariant,
                    format!("the proof does not establish that {} holds", o.invariant),
                ));
            }
        }
        out
    }
}

/// Result of one verification, including any complexity-judge exchanges.
#[derive(Debug, Clone)]
pub struct VerifyRun {
    pub verdict: VerificationVerdict,
    pub judge_exchanges: Vec<Exchange>,
}

/// Everything verification needs besides the candidate itself.
pub struct Verifier<'a> {
    pub sandbox: &'a Sandbox,
    pub limits: ResourceLimits,
    pub invariants: Vec<InvariantSpec>,
    /// Asked for a complexity judgment when the task declares a budget.
    pub judge: Option<&'a dyn ChatEngine>,
    pub templates: &'a PromptTemplates,
    pub settings: PromptSettings,
    /// Judge disagreement is reported but never fails efficiency.
    pub lenient_efficiency: bool,
}

impl Verifier<'_> {
    pub fn invariant_ids(&self) -> Vec<InvariantId> {
        self.invariants.iter().map(|i| i.id).collect()
    }

    fn is_strict(&self, id: InvariantId) -> bool {
        self.invariants.iter().any(|i| i.id == id && i.strict)
    }

    /// Checks `candidate` against the visible part of `task` and gates it on `proof`.
    pub fn verify(
        &self,
        candidate: &CandidateProgram,
        proof: &ProofDocument,
        task: &TaskSpec,
    ) -> Result<VerifyRun, SandboxError> {
        let source = candidate.source.as_str();
        let mut judge_exchanges = Vec::new();
        let mut outcomes = Vec::new();
        let mut edge_matched = 0u32;
        let syntax = check_syntax(self.sandbox, source, &self.limits)?;
        let compiled = syntax.passed;
        outcomes.push(syntax);

        for spec in &self.invariants {
            if spec.id == InvariantId::Syntax {
                continue;
            }
            let outcome = if !compiled {
                InvariantOutcome {
                    invariant: spec.id,
                    strict: spec.strict,
                    passed: false,
                    evidence: "skipped: the candidate does not compile".into(),
                }
            } else {
                match spec.id {
                    InvariantId::IoFormat => check_io_format(self.sandbox, source, task, &self.limits)?,
                    InvariantId::Completeness => {
                        let (outcome, report) = check_completeness(self.sandbox, source, task, &self.limits)?;
                        if let Some(report) = report {
                            let edges = task.test_suite.edge_probes.len();
                            edge_matched = report.probes.iter().take(edges).filter(|p| p.passed()).count() as u32;
                        }
                        outcome
                    }
                    InvariantId::Efficiency => self.check_efficiency(candidate, task, &mut judge_exchanges)?,
                    InvariantId::Syntax => unreachable!(),
                }
            };
            outcomes.push(outcome);
        }
        for o in &mut outcomes {
            o.strict = self.is_strict(o.invariant);
        }
        outcomes.sort_by_key(|o| o.invariant);

        let proof_ok = self.invariants.iter().filter(|i| i.strict).all(|i| proof.holds(i.id));
        let checks_ok = outcomes.iter().filter(|o| o.strict).all(|o| o.passed);
        let score = outcomes.iter().filter(|o| o.passed).count() as u32 + edge_matched;
        Ok(VerifyRun {
            verdict: VerificationVerdict {
                accepted: checks_ok && proof_ok,
                outcomes,
                proof_ok,
                score,
            },
            judge_exchanges,
        })
    }

    fn check_efficiency(
        &self,
        candidate: &CandidateProgram,
        task: &TaskSpec,
        log: &mut Vec<Exchange>,
    ) -> Result<InvariantOutcome, SandboxError> {
        let mut outcome = check_efficiency_runtime(self.sandbox, &candidate.source, task, &self.limits)?;
        if !outcome.passed {
            return Ok(outcome);
        }
        let (Some(budget_text), Some(judge)) = (task.complexity_budget.as_deref(), self.judge) else {
            return Ok(outcome);
        };
        let inputs = PromptInputs {
            candidate: Some(candidate),
            ..PromptInputs::new(task)
        };
        let note = match exchange(judge, self.templates, Phase::ComplexityJudge, &inputs, &self.settings, log) {
            Err(e) => format!("complexity judge unavailable ({e}); inconclusive"),
            Ok(response) => match (parse_judgment(&response), parse_complexity(budget_text)) {
                (None, _) => "complexity judgment unparseable; inconclusive".to_string(),
                (_, None) => format!("budget `{budget_text}` unparseable; inconclusive"),
                (Some(judged), Some(budget)) if judged > budget => {
                    if self.lenient_efficiency {
                        format!("advisory: judged {judged} exceeds budget {budget}")
                    } else {
                        outcome.passed = false;
                        format!("judged {judged} exceeds budget {budget}")
                    }
                }
                (Some(judged), Some(budget)) => format!("judged {judged} within budget {budget}"),
            },
        };
        outcome.evidence = format!("{}; {note}", outcome.evidence);
        Ok(outcome)
    }
}

fn outcome(invariant: InvariantId, passed: bool, evidence: impl Into<String>) -> InvariantOutcome {
    InvariantOutcome {
        invariant,
        strict: false,
        passed,
        evidence: evidence.into(),
    }
}

pub fn check_syntax(sandbox: &Sandbox, source: &str, limits: &ResourceLimits) -> Result<InvariantOutcome, SandboxError> {
    if source.trim().is_empty() {
        return Ok(outcome(InvariantId::Syntax, false, "empty program"));
    }
    let report = sandbox.execute(&ExecRequest::compile(source), limits)?;
    Ok(match report.status {
        ExecStatus::Ok => outcome(InvariantId::Syntax, true, "compiles"),
        _ => outcome(InvariantId::Syntax, false, format!("does not compile: {}", report.exit_detail)),
    })
}

fn io_violation(report: &ExecutionReport, entry: &str) -> Option<String> {
    if report.exit_detail == "entry point not found" {
        return Some(format!("entry point `{entry}` is not defined"));
    }
    match report.exception_kind() {
        Some("ArityError") => Some(format!("`{entry}` cannot be called with the sample arguments: {}", report.exit_detail)),
        Some("TypeError") => Some(format!("calling `{entry}` raised {}", report.exit_detail.trim_start_matches("exception "))),
        _ => None,
    }
}

/// Runs the first sample case and checks the calling convention or the shape of stdout.
pub fn check_io_format(
    sandbox: &Sandbox,
    source: &str,
    task: &TaskSpec,
    limits: &ResourceLimits,
) -> Result<InvariantOutcome, SandboxError> {
    let id = InvariantId::IoFormat;
    let sample = task.sample_case();
    match task.io_mode {
        IoMode::FunctionCall => {
            let entry = task.entry_point.as_deref().unwrap_or_default();
            let report = match sample {
                Some(case) => sandbox.execute(&ExecRequest::call(source, entry, &case.input), limits)?,
                None => {
                    let probe = crate::task::TestCase::assertion("assert callable(candidate)", "entry-point probe");
                    let req = ExecRequest::for_case(source, IoMode::FunctionCall, Some(entry), &probe);
                    sandbox.execute(&req, limits)?
                }
            };
            if let Some(problem) = io_violation(&report, entry) {
                return Ok(outcome(id, false, problem));
            }
            Ok(outcome(id, true, format!("`{entry}` is callable with the sample arguments")))
        }
        IoMode::Stdio => {
            let Some(case) = sample else {
                return Ok(outcome(id, true, "no sample case; not checked"));
            };
            let report = sandbox.execute(&ExecRequest::stdio(source, &case.input), limits)?;
            if report.exception_kind() == Some("EOFError") {
                return Ok(outcome(id, false, "reads past the end of the sample input (EOFError)"));
            }
            if report.status != ExecStatus::Ok {
                return Ok(outcome(id, true, format!("sample run ended with {:?}; format not judged", report.status)));
            }
            let got = crate::canonical::normalize_stdout(&report.stdout);
            let want = crate::canonical::normalize_stdout(&case.expected);
            if got.is_empty() && !want.is_empty() {
                return Ok(outcome(id, false, "prints nothing to stdout on the sample input"));
            }
            let (g, w) = (got.lines().count(), want.lines().count());
            if g != w {
                return Ok(outcome(id, false, format!("prints {g} line(s) on the sample input, expected {w}")));
            }
            Ok(outcome(id, true, "stdout has the expected shape on the sample input"))
        }
    }
}

/// Runs every visible probe. Also returns the probe report for scoring.
pub fn check_completeness(
    sandbox: &Sandbox,
    source: &str,
    task: &TaskSpec,
    limits: &ResourceLimits,
) -> Result<(InvariantOutcome, Option<ProbeReport>), SandboxError> {
    let id = InvariantId::Completeness;
    let probes = visible_probes(task);
    if probes.is_empty() {
        return Ok((outcome(id, true, "no visible probes"), None));
    }
    let report = run_probes(sandbox, source, task.io_mode, task.entry_point.as_deref(), &probes, limits)?;
    let failed: Vec<String> = report
        .probes
        .iter()
        .filter(|p| !p.passed())
        .map(|p| {
            let label = if p.case.label.is_empty() { "probe" } else { &p.case.label };
            match (p.case.kind, p.matched) {
                (CaseKind::Io, Some(false)) => format!(
                    "{label}: input {} expected {} got {}",
                    short(&p.case.input),
                    short(&p.case.expected),
                    short(p.report.observed(task.io_mode))
                ),
                _ => format!("{label}: {:?} {}", p.report.status, short(&p.report.exit_detail)),
            }
        })
        .collect();
    let total = report.probes.len();
    let o = if failed.is_empty() {
        outcome(id, true, format!("all {total} visible probe(s) matched"))
    } else {
        outcome(id, false, format!("{} of {total} probe(s) failed: {}", failed.len(), failed.join("; ")))
    };
    Ok((o, Some(report)))
}

/// Stage one of the efficiency check: the largest visible case must finish within limits.
pub fn check_efficiency_runtime(
    sandbox: &Sandbox,
    source: &str,
    task: &TaskSpec,
    limits: &ResourceLimits,
) -> Result<InvariantOutcome, SandboxError> {
    let id = InvariantId::Efficiency;
    let Some(case) = task.test_suite.largest_case() else {
        return Ok(outcome(id, true, "no visible case to time"));
    };
    let req = ExecRequest::for_case(source, task.io_mode, task.entry_point.as_deref(), case);
    let report = sandbox.execute(&req, limits)?;
    let size = case.input.len();
    Ok(match report.status {
        ExecStatus::Timeout => outcome(
            id,
            false,
            format!("largest visible input ({size} bytes) did not finish: {}", report.exit_detail),
        ),
        ExecStatus::Oom => outcome(
            id,
            false,
            format!("largest visible input ({size} bytes) ran out of memory: {}", report.exit_detail),
        ),
        _ => outcome(id, true, format!("largest visible input ({size} bytes) finished within limits")),
    })
}

fn short(text: &str) -> String {
    const MAX: usize = 80;
    let t = text.trim();
    if t.len() <= MAX {
        return t.to_string();
    }
    let mut cut = MAX;
    while !t.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}...", &t[..cut])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{SourceBenchmark, TestSuite};

    fn task(budget: Option<&str>) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            description: "d".into(),
            io_mode: IoMode::FunctionCall,
            entry_point: Some("f".into()),
            test_suite: TestSuite::default(),
            starter_code: None,
            difficulty: None,
            category: None,
            source_benchmark: SourceBenchmark::Custom,
            complexity_budget: budget.map(str::to_string),
        }
    }

    #[test]
    fn strictness_resolution() {
        let set = invariant_set(&DEFAULT_STRICT, &task(None), false);
        let strict: Vec<_> = set.iter().filter(|i| i.strict).map(|i| i.id).collect();
        assert_eq!(strict, DEFAULT_STRICT.to_vec());
        assert!(invariant_set(&DEFAULT_STRICT, &task(Some("O(n)")), false)[2].strict);
        assert!(invariant_set(&DEFAULT_STRICT, &task(None), true)[2].strict);
    }

    #[test]
    fn id_round_trip() {
        for id in InvariantId::ALL {
            assert_eq!(InvariantId::parse(id.as_str()), Some(id));
        }
        assert_eq!(InvariantId::parse("termination"), None);
    }

    #[test]
    fn rejection_evidence_covers_checks_and_claims() {
        let verdict = VerificationVerdict {
            accepted: false,
            outcomes: vec![
                InvariantOutcome {
                    invariant: InvariantId::Syntax,
                    strict: true,
                    passed: true,
                    evidence: "compiles".into(),
                },
                InvariantOutcome {
                    invariant: InvariantId::Completeness,
                    strict: true,
                    passed: false,
                    evidence: "probe failed".into(),
                },
                InvariantOutcome {
                    invariant: InvariantId::Efficiency,
                    strict: false,
                    passed: false,
                    evidence: "slow".into(),
                },
            ],
            proof_ok: false,
            score: 1,
        };
        let proof = ProofDocument::empty(&InvariantId::ALL);
        let ev = verdict.rejection_evidence(&proof);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].0, InvariantId::Syntax);
        assert_eq!(ev[1], (InvariantId::Completeness, "probe failed".to_string()));
    }
}
