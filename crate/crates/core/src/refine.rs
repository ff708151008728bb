//! The refinement loop: draft, review, derive a gradient, revise, prove, verify.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    exchange, CallError, EngineRef, Exchange, Phase, PromptInputs, PromptSettings, PromptTemplates, SharedEngine,
};
use crate::fence::extract_code_fence;
use crate::gradient::{all_pass, derive_gradient, parse_feedback, Axis, FeedbackReport, PseudoGradient};
use crate::sandbox::{run_probes, visible_probes, ProbeReport, ResourceLimits, Sandbox, SandboxError};
use crate::task::{CandidateProgram, TaskSpec};
use crate::verify::{
    invariant_set, parse_proof, InvariantId, ProofDocument, VerificationVerdict, Verifier, DEFAULT_STRICT,
};

pub const TRACE_SCHEMA_VERSION: &str = "codegrad.trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub max_iterations: u32,
    pub forward: EngineRef,
    /// `None` runs the draft-only baseline.
    pub backward: Option<EngineRef>,
    pub probes_enabled: bool,
    pub strict_invariants: Vec<InvariantId>,
    pub strict_efficiency: bool,
    pub lenient_efficiency: bool,
    pub sandbox_limits: ResourceLimits,
    pub decode_temperature: f64,
    pub max_output_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random_seed: Option<u64>,
    pub interpreter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_dir: Option<PathBuf>,
}

pub const DEFAULT_MAX_ITERATIONS: u32 = 2;
pub const MAX_ITERATIONS_CAP: u32 = 32;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            forward: EngineRef::http("forward", "http://localhost:8000/v1", crate::engine::DEFAULT_FORWARD_MODEL),
            backward: Some(EngineRef::http(
                "backward",
                "http://localhost:8000/v1",
                crate::engine::DEFAULT_BACKWARD_MODEL,
            )),
            probes_enabled: true,
            strict_invariants: DEFAULT_STRICT.to_vec(),
            strict_efficiency: false,
            lenient_efficiency: false,
            sandbox_limits: ResourceLimits::default(),
            decode_temperature: 0.0,
            max_output_tokens: 2048,
            random_seed: None,
            interpreter: "python3".into(),
            template_dir: None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("max_iterations must be at most {MAX_ITERATIONS_CAP}, got {0}")]
    TooManyIterations(u32),
    #[error("decode_temperature must be a finite non-negative number")]
    BadTemperature,
    #[error("max_output_tokens must be positive")]
    ZeroTokens,
    #[error("strict_efficiency and lenient_efficiency are mutually exclusive")]
    EfficiencyMode,
    #[error("sandbox limits: {0}")]
    Limits(String),
    #[error("engine: {0}")]
    Engine(String),
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations > MAX_ITERATIONS_CAP {
            return Err(ConfigError::TooManyIterations(self.max_iterations));
        }
        if !self.decode_temperature.is_finite() || self.decode_temperature < 0.0 {
            return Err(ConfigError::BadTemperature);
        }
        if self.max_output_tokens == 0 {
            return Err(ConfigError::ZeroTokens);
        }
        if self.strict_efficiency && self.lenient_efficiency {
            return Err(ConfigError::EfficiencyMode);
        }
        self.sandbox_limits.validate().map_err(ConfigError::Limits)?;
        self.forward.validate().map_err(|e| ConfigError::Engine(e.to_string()))?;
        if let Some(b) = &self.backward {
            b.validate().map_err(|e| ConfigError::Engine(e.to_string()))?;
        }
        Ok(())
    }

    pub fn prompt_settings(&self) -> PromptSettings {
        PromptSettings {
            temperature: self.decode_temperature,
            max_output_tokens: self.max_output_tokens,
            seed: self.random_seed,
        }
    }
}

/// Live engines for one run.
#[derive(Clone)]
pub struct Engines {
    pub forward: SharedEngine,
    pub backward: Option<SharedEngine>,
}

/// Shared state for running many tasks under one configuration.
pub struct LoopContext<'a> {
    pub sandbox: &'a Sandbox,
    pub templates: &'a PromptTemplates,
    pub config: &'a RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    /// Review passed and verification accepted.
    Accepted,
    /// The loop stopped without an accepted, all-pass candidate, or an engine
    /// failure ended it early (see `TaskResult::error`).
    UnverifiedBest,
    /// Draft-only baseline; nothing was reviewed or verified.
    BaselineDraft,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Accepted => "accepted",
            TaskStatus::UnverifiedBest => "unverified_best",
            TaskStatus::BaselineDraft => "baseline_draft",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCalls {
    pub forward: u32,
    pub backward: u32,
    /// Complexity-judge calls. Served by the backward engine, counted apart from reviews.
    pub judge: u32,
}

impl EngineCalls {
    fn add(&mut self, other: EngineCalls) {
        self.forward += other.forward;
        self.backward += other.backward;
        self.judge += other.judge;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Draft,
    Accepted,
    Rejected,
}

/// One candidate and everything produced about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub candidate: CandidateProgram,
    /// The gradient this candidate was revised from.
    pub gradient: Option<PseudoGradient>,
    /// The review of this candidate.
    pub feedback: Option<FeedbackReport>,
    pub proof: Option<ProofDocument>,
    pub verdict: Option<VerificationVerdict>,
    pub disposition: Disposition,
    pub engine_calls: EngineCalls,
    pub wall_ms: u64,
    pub exchanges: Vec<Exchange>,
}

impl IterationRecord {
    fn new(candidate: CandidateProgram, gradient: Option<PseudoGradient>) -> Self {
        Self {
            iteration: candidate.iteration,
            candidate,
            gradient,
            feedback: None,
            proof: None,
            verdict: None,
            disposition: Disposition::Draft,
            engine_calls: EngineCalls::default(),
            wall_ms: 0,
            exchanges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub final_candidate: CandidateProgram,
    pub status: TaskStatus,
    pub trace: Vec<IterationRecord>,
    /// Filled in by hidden-test scoring; `None` until then.
    pub final_tests_passed: Option<bool>,
    pub engine_calls: EngineCalls,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskResult {
    /// Schema-versioned JSON form of the whole trace.
    pub fn trace_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("task result serializes");
        v["schema_version"] = TRACE_SCHEMA_VERSION.into();
        v
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

/// Picks the reported candidate when the loop ends without acceptance:
/// the highest-scoring accepted candidate, else the highest-scoring verified
/// one, latest iteration on ties, else the draft.
pub fn select_best(trace: &[IterationRecord]) -> Option<&IterationRecord> {
    let best = |accepted_only: bool| {
        trace
            .iter()
            .filter(|r| r.verdict.as_ref().is_some_and(|v| !accepted_only || v.accepted))
            .max_by_key(|r| (r.verdict.as_ref().map_or(0, |v| v.score), r.iteration))
    };
    best(true).or_else(|| best(false)).or_else(|| trace.first())
}

fn axis_for(id: InvariantId) -> Axis {
    match id {
        InvariantId::Syntax => Axis::Correctness,
        InvariantId::IoFormat => Axis::IoFormat,
        InvariantId::Efficiency => Axis::Efficiency,
        InvariantId::Completeness => Axis::Completeness,
    }
}

struct Run<'a, 'c> {
    ctx: &'a LoopContext<'c>,
    engines: &'a Engines,
    task: TaskSpec,
    settings: PromptSettings,
    invariant_text: Vec<(String, String)>,
    trace: Vec<IterationRecord>,
}

enum Stop {
    Engine(String),
    Sandbox(SandboxError),
}

impl From<SandboxError> for Stop {
    fn from(e: SandboxError) -> Self {
        Stop::Sandbox(e)
    }
}

impl From<CallError> for Stop {
    fn from(e: CallError) -> Self {
        Stop::Engine(e.to_string())
    }
}

impl Run<'_, '_> {
    fn forward(&mut self, rec: usize, phase: Phase, inputs: PromptInputs<'_>) -> Result<String, Stop> {
        let r = &mut self.trace[rec];
        r.engine_calls.forward += 1;
        let templates = self.ctx.templates;
        Ok(exchange(&*self.engines.forward, templates, phase, &inputs, &self.settings, &mut r.exchanges)?)
    }

    fn verifier(&self) -> Verifier<'_> {
        Verifier {
            sandbox: self.ctx.sandbox,
            limits: self.ctx.config.sandbox_limits.clone(),
            invariants: invariant_set(
                &self.ctx.config.strict_invariants,
                &self.task,
                self.ctx.config.strict_efficiency,
            ),
            judge: self.engines.backward.as_deref(),
            templates: self.ctx.templates,
            settings: self.settings,
            lenient_efficiency: self.ctx.config.lenient_efficiency,
        }
    }

    fn review(&mut self, rec: usize) -> Result<FeedbackReport, Stop> {
        let backward = self.engines.backward.clone().expect("review needs a backward engine");
        let candidate = self.trace[rec].candidate.clone();
        let probes: Option<ProbeReport> = if self.ctx.config.probes_enabled {
            let cases = visible_probes(&self.task);
            if cases.is_empty() {
                None
            } else {
                Some(run_probes(
                    self.ctx.sandbox,
                    &candidate.source,
                    self.task.io_mode,
                    self.task.entry_point.as_deref(),
                    &cases,
                    &self.ctx.config.sandbox_limits,
                )?)
            }
        } else {
            None
        };
        let inputs = PromptInputs {
            candidate: Some(&candidate),
            probes: probes.as_ref(),
            ..PromptInputs::new(&self.task)
        };
        let r = &mut self.trace[rec];
        r.engine_calls.backward += 1;
        let text = exchange(
            &*backward,
            self.ctx.templates,
            Phase::BackwardReview,
            &inputs,
            &self.settings,
            &mut r.exchanges,
        )?;
        let fb = parse_feedback(&text);
        r.feedback = Some(fb.clone());
        Ok(fb)
    }

    fn prove(&mut self, rec: usize, gradient: Option<&PseudoGradient>) -> Result<ProofDocument, Stop> {
        let candidate = self.trace[rec].candidate.clone();
        let invariant_text = self.invariant_text.clone();
        let task = self.task.clone();
        let inputs = PromptInputs {
            candidate: Some(&candidate),
            gradient,
            invariants: &invariant_text,
            ..PromptInputs::new(&task)
        };
        let text = self.forward(rec, Phase::Proof, inputs)?;
        let ids: Vec<InvariantId> = InvariantId::ALL.to_vec();
        Ok(parse_proof(&text, &ids))
    }

    fn verify(&mut self, rec: usize, proof: ProofDocument) -> Result<VerificationVerdict, Stop> {
        let run = self.verifier().verify(&self.trace[rec].candidate, &proof, &self.task)?;
        let r = &mut self.trace[rec];
        r.engine_calls.judge += run.judge_exchanges.len() as u32;
        r.exchanges.extend(run.judge_exchanges);
        r.proof = Some(proof);
        r.verdict = Some(run.verdict.clone());
        Ok(run.verdict)
    }

    /// Returns the final record index and status.
    fn iterate(&mut self) -> Result<(usize, TaskStatus), Stop> {
        let n = self.ctx.config.max_iterations;
        let mut current = 0usize;
        let mut reuse: Option<FeedbackReport> = None;
        let mut carried: Vec<(InvariantId, String)> = Vec::new();
        for t in 0..=n {
            let started = Instant::now();
            let feedback = match reuse.take() {
                Some(f) => f,
                None => self.review(current)?,
            };
            if all_pass(&feedback) {
                let verdict = match self.trace[current].verdict.clone() {
                    Some(v) => v,
                    None => {
                        let proof = if n >= 1 {
                            self.prove(current, None)?
                        } else {
                            ProofDocument::empty(&InvariantId::ALL)
                        };
                        self.verify(current, proof)?
                    }
                };
                self.trace[current].wall_ms += started.elapsed().as_millis() as u64;
                let status = if verdict.accepted {
                    TaskStatus::Accepted
                } else {
                    TaskStatus::UnverifiedBest
                };
                return Ok((current, status));
            }
            self.trace[current].wall_ms += started.elapsed().as_millis() as u64;
            if t == n {
                break;
            }

            let started = Instant::now();
            let parent = self.trace[current].candidate.clone();
            let mut gradient = derive_gradient(&feedback, &parent);
            for (id, evidence) in &carried {
                gradient.push_global(
                    format!("the previous revision failed the {id} check: {evidence}"),
                    Some(axis_for(*id)),
                );
            }
            let task = self.task.clone();
            let inputs = PromptInputs {
                candidate: Some(&parent),
                gradient: Some(&gradient),
                feedback: Some(&feedback),
                ..PromptInputs::new(&task)
            };
            self.trace.push(IterationRecord::new(
                CandidateProgram::revision(String::new(), t + 1, &parent),
                Some(gradient.clone()),
            ));
            let rec = self.trace.len() - 1;
            let text = self.forward(rec, Phase::ForwardRevise, inputs)?;
            self.trace[rec].candidate.source = extract_code_fence(&text);
            let proof = self.prove(rec, Some(&gradient))?;
            let verdict = self.verify(rec, proof)?;
            self.trace[rec].wall_ms += started.elapsed().as_millis() as u64;
            if verdict.accepted {
                self.trace[rec].disposition = Disposition::Accepted;
                current = rec;
                carried.clear();
            } else {
                self.trace[rec].disposition = Disposition::Rejected;
                carried = verdict.rejection_evidence(self.trace[rec].proof.as_ref().expect("set by verify"));
                reuse = Some(feedback);
            }
        }
        let best = select_best(&self.trace).map_or(0, |r| r.iteration as usize);
        let idx = self.trace.iter().position(|r| r.iteration as usize == best).unwrap_or(0);
        Ok((idx, TaskStatus::UnverifiedBest))
    }
}

/// Runs the loop on `task`. Only the redacted view of the task (first sample
/// case and edge probes) is visible to engines and checks.
pub fn run_task(ctx: &LoopContext<'_>, engines: &Engines, task: &TaskSpec) -> Result<TaskResult, LoopError> {
    let started = Instant::now();
    let view = task.redacted();
    let invariant_text = InvariantId::ALL
        .iter()
        .map(|id| (id.as_str().to_string(), id.description().to_string()))
        .collect();
    let mut run = Run {
        ctx,
        engines,
        task: view,
        settings: ctx.config.prompt_settings(),
        invariant_text,
        trace: vec![IterationRecord::new(CandidateProgram::draft(String::new()), None)],
    };
    let finish = |run: Run<'_, '_>, idx: usize, status: TaskStatus, error: Option<String>| {
        let mut calls = EngineCalls::default();
        for r in &run.trace {
            calls.add(r.engine_calls);
        }
        TaskResult {
            task_id: task.task_id.clone(),
            final_candidate: run.trace[idx].candidate.clone(),
            status,
            final_tests_passed: None,
            engine_calls: calls,
            wall_ms: started.elapsed().as_millis() as u64,
            error,
            trace: run.trace,
        }
    };

    let view = run.task.clone();
    let draft = run.forward(0, Phase::ForwardDraft, PromptInputs::new(&view));
    run.trace[0].wall_ms = started.elapsed().as_millis() as u64;
    match draft {
        Ok(text) => run.trace[0].candidate.source = extract_code_fence(&text),
        Err(Stop::Engine(e)) => return Ok(finish(run, 0, TaskStatus::UnverifiedBest, Some(e))),
        Err(Stop::Sandbox(e)) => return Err(e.into()),
    }
    if engines.backward.is_none() {
        return Ok(finish(run, 0, TaskStatus::BaselineDraft, None));
    }
    match run.iterate() {
        Ok((idx, status)) => Ok(finish(run, idx, status, None)),
        Err(Stop::Sandbox(e)) => Err(e.into()),
        Err(Stop::Engine(e)) => {
            let idx = select_best(&run.trace).map_or(0, |r| r.iteration as usize);
            let idx = run.trace.iter().position(|r| r.iteration as usize == idx).unwrap_or(0);
            Ok(finish(run, idx, TaskStatus::UnverifiedBest, Some(e)))
        }
    }
}
