//! Prompt templates. Each phase has a system and a user template with
//! `{{name}}` placeholders. Built-in templates can be overridden per file from
//! a directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::ChatRequest;
use crate::gradient::{AxisVerdict, FeedbackReport, PseudoGradient};
use crate::sandbox::ProbeReport;
use crate::task::{CandidateProgram, IoMode, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    ForwardDraft,
    ForwardRevise,
    BackwardReview,
    Proof,
    ComplexityJudge,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::ForwardDraft,
        Phase::ForwardRevise,
        Phase::BackwardReview,
        Phase::Proof,
        Phase::ComplexityJudge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::ForwardDraft => "forward_draft",
            Phase::ForwardRevise => "forward_revise",
            Phase::BackwardReview => "backward_review",
            Phase::Proof => "proof",
            Phase::ComplexityJudge => "complexity_judge",
        }
    }

    fn files(self) -> (&'static str, &'static str) {
        match self {
            Phase::ForwardDraft => ("forward_system.txt", "forward_draft.txt"),
            Phase::ForwardRevise => ("forward_system.txt", "forward_revise.txt"),
            Phase::BackwardReview => ("backward_system.txt", "backward_review.txt"),
            Phase::Proof => ("proof_system.txt", "proof.txt"),
            Phase::ComplexityJudge => ("complexity_system.txt", "complexity.txt"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{phase} prompt needs `{input}`")]
    MissingPromptInput { phase: &'static str, input: &'static str },
    #[error("template `{file}` uses unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { file: String, name: String },
    #[error("template `{file}` has an unterminated placeholder")]
    Unterminated { file: String },
    #[error("reading template `{file}`: {message}")]
    Io { file: String, message: String },
    #[error("max_output_tokens must be positive")]
    ZeroTokens,
}

const BUILTIN: [(&str, &str); 9] = [
    ("forward_system.txt", include_str!("../../templates/v1/forward_system.txt")),
    ("forward_draft.txt", include_str!("../../templates/v1/forward_draft.txt")),
    ("forward_revise.txt", include_str!("../../templates/v1/forward_revise.txt")),
    ("backward_system.txt", include_str!("../../templates/v1/backward_system.txt")),
    ("backward_review.txt", include_str!("../../templates/v1/backward_review.txt")),
    ("proof_system.txt", include_str!("../../templates/v1/proof_system.txt")),
    ("proof.txt", include_str!("../../templates/v1/proof.txt")),
    ("complexity_system.txt", include_str!("../../templates/v1/complexity_system.txt")),
    ("complexity.txt", include_str!("../../templates/v1/complexity.txt")),
];

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    files: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            files: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Built-in templates with any same-named files in `dir` substituted.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::builtin();
        for (name, text) in t.files.iter_mut() {
            let path = dir.join(name);
            if path.is_file() {
                *text = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                    file: path.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        Ok(t)
    }

    pub fn raw(&self, file: &str) -> Option<&str> {
        self.files.get(file).map(String::as_str)
    }

    /// System and user template text for a phase.
    pub fn for_phase(&self, phase: Phase) -> (&str, &str) {
        let (s, u) = phase.files();
        (&self.files[s], &self.files[u])
    }
}

/// Decoding parameters shared by every request of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptSettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for PromptSettings {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 2048,
            seed: None,
        }
    }
}

/// Everything a prompt may draw on. Which fields are required depends on the phase.
#[derive(Debug, Clone, Copy)]
pub struct PromptInputs<'a> {
    pub task: &'a TaskSpec,
    pub candidate: Option<&'a CandidateProgram>,
    pub gradient: Option<&'a PseudoGradient>,
    pub probes: Option<&'a ProbeReport>,
    /// The review the gradient was derived from.
    pub feedback: Option<&'a FeedbackReport>,
    /// `(id, description)` pairs.
    pub invariants: &'a [(String, String)],
}

impl<'a> PromptInputs<'a> {
    pub fn new(task: &'a TaskSpec) -> Self {
        Self {
            task,
            candidate: None,
            gradient: None,
            probes: None,
            feedback: None,
            invariants: &[],
        }
    }
}

pub fn render_prompt(
    templates: &PromptTemplates,
    phase: Phase,
    inputs: &PromptInputs<'_>,
    settings: &PromptSettings,
) -> Result<ChatRequest, PromptError> {
    if settings.max_output_tokens == 0 {
        return Err(PromptError::ZeroTokens);
    }
    let missing = |input| PromptError::MissingPromptInput {
        phase: phase.as_str(),
        input,
    };
    let task = inputs.task;
    if task.description.trim().is_empty() {
        return Err(missing("task_description"));
    }
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    vars.insert("task_description", task.description.trim().to_string());
    vars.insert("io_contract", io_contract(task));
    vars.insert("starter_section", starter_section(task));

    if phase != Phase::ForwardDraft {
        let candidate = inputs.candidate.ok_or_else(|| missing("candidate"))?;
        vars.insert("candidate_source", candidate.source.trim_end().to_string());
        vars.insert("numbered_source", numbered(&candidate.source));
    }
    match phase {
        Phase::ForwardRevise => {
            let g = inputs.gradient.filter(|g| !g.is_empty()).ok_or_else(|| missing("gradient"))?;
            vars.insert("gradient", g.render().trim_end().to_string());
            vars.insert("review_section", review_section(inputs.feedback));
        }
        Phase::BackwardReview => {
            vars.insert("probe_section", probe_section(inputs.probes));
        }
        Phase::Proof => {
            if inputs.invariants.is_empty() {
                return Err(missing("invariants"));
            }
            let gradient = inputs
                .gradient
                .filter(|g| !g.is_empty())
                .map_or_else(|| "(initial draft, no edits)".to_string(), |g| g.render().trim_end().to_string());
            vars.insert("gradient", gradient);
            let mut list = String::new();
            let mut skeleton = String::new();
            for (id, desc) in inputs.invariants {
                let _ = writeln!(list, "- {id}: {desc}");
                let _ = write!(skeleton, "[INVARIANT {id}]\n<argument>\nHOLDS\n\n");
            }
            vars.insert("invariant_list", list.trim_end().to_string());
            vars.insert("proof_skeleton", skeleton.trim_end().to_string());
        }
        Phase::ComplexityJudge => {
            let budget = task.complexity_budget.as_deref().ok_or_else(|| missing("complexity_budget"))?;
            vars.insert("complexity_budget", budget.to_string());
        }
        Phase::ForwardDraft => {}
    }

    let (sys_file, user_file) = phase.files();
    let (sys, user) = templates.for_phase(phase);
    Ok(ChatRequest {
        system_text: substitute(sys_file, sys, &vars)?.trim().to_string(),
        user_text: substitute(user_file, user, &vars)?.trim().to_string(),
        temperature: settings.temperature,
        max_output_tokens: settings.max_output_tokens,
        seed: settings.seed,
    })
}

fn substitute(file: &str, template: &str, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| PromptError::Unterminated { file: file.to_string() })?;
        let name = after[..end].trim();
        let value = vars.get(name).ok_or_else(|| PromptError::UnknownPlaceholder {
            file: file.to_string(),
            name: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn io_contract(task: &TaskSpec) -> String {
    match (task.io_mode, task.entry_point.as_deref()) {
        (IoMode::FunctionCall, Some(entry)) => format!(
            "Define a function named `{entry}`. It is called with positional arguments and its return value is checked. Do not read input or print the answer."
        ),
        (IoMode::FunctionCall, None) => "Define the requested function and return its result.".to_string(),
        (IoMode::Stdio, _) => {
            "Read all input from standard input and write the answer to standard output, formatted exactly as described. Print nothing else.".to_string()
        }
    }
}

fn starter_section(task: &TaskSpec) -> String {
    match task.starter_code.as_deref().map(str::trim) {
        Some(code) if !code.is_empty() => format!("\n## Starter code\n```python\n{code}\n```\n"),
        _ => String::new(),
    }
}

fn probe_section(probes: Option<&ProbeReport>) -> String {
    match probes {
        Some(p) if !p.probes.is_empty() => format!("\n## Observed behaviour on probe inputs\n{}\n", p.render().trim_end()),
        _ => String::new(),
    }
}

fn review_section(feedback: Option<&FeedbackReport>) -> String {
    let Some(f) = feedback else {
        return String::new();
    };
    let mut out = String::new();
    for a in f.open_axes() {
        let verdict = if a.verdict == AxisVerdict::Fail { "fail" } else { "no verdict" };
        let note = if a.commentary.is_empty() { "(no commentary)" } else { a.commentary.as_str() };
        let _ = writeln!(out, "- {} ({verdict}): {note}", a.axis.tag());
    }
    if out.is_empty() {
        return String::new();
    }
    format!("\n## Review\n{}\n", out.trim_end())
}

fn numbered(source: &str) -> String {
    let lines: Vec<&str> = source.trim_end().lines().collect();
    let width = lines.len().max(1).to_string().len();
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let _ = writeln!(out, "{:>width$} | {line}", i + 1);
    }
    out.trim_end().to_string()
}
