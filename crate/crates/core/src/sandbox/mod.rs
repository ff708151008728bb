//! Running untrusted guest programs under resource limits.
//!
//! Two backends share one surface:
//!
//! - **process-direct** runs the guest interpreter on a small driver script
//!   shipped with this crate. The host enforces the wall-clock limit by
//!   killing the process group and truncates captured output. Guest-level
//!   socket creation is disabled by the driver.
//! - **shim** hands a JSON job to an external in-guest runner which also
//!   enforces CPU and memory limits and reports a structured status. The host
//!   still enforces wall time and output size around it.
//!
//! Every execution gets a fresh temporary working directory.

mod process;
mod shim;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{CaseKind, IoMode, TaskSpec, TestCase};

pub use shim::{ShimJob, ShimLimits, ShimResult, SHIM_PROTOCOL_VERSION};

const DRIVER_SOURCE: &str = include_str!("driver.py");
const EXIT_COMPILE: i32 = 83;
const EXIT_NO_ENTRY: i32 = 84;
const EXIT_PROTOCOL: i32 = 85;
const EXIT_ARITY: i32 = 86;
const EXCEPTION_MARKER: &str = "__codegrad_exc__:";

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
    #[error("sandbox workspace error: {0}")]
    Workspace(#[from] std::io::Error),
    #[error("invalid execution request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPolicy {
    #[default]
    Denied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    pub memory_mb: u64,
    pub max_output_bytes: usize,
    #[serde(default)]
    pub network: NetworkPolicy,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            cpu_seconds: 10.0,
            wall_seconds: 15.0,
            memory_mb: 512,
            max_output_bytes: 64 * 1024,
            network: NetworkPolicy::Denied,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cpu_seconds > 0.0 && self.wall_seconds > 0.0 && self.memory_mb > 0 && self.max_output_bytes > 0) {
            return Err("all resource limits must be positive".into());
        }
        if self.wall_seconds < self.cpu_seconds {
            return Err(format!(
                "wall_seconds ({}) must be at least cpu_seconds ({})",
                self.wall_seconds, self.cpu_seconds
            ));
        }
        Ok(())
    }

    /// Limits with the given wall clock and a CPU limit no larger than it.
    pub fn with_wall_seconds(mut self, wall: f64) -> Self {
        self.wall_seconds = wall;
        self.cpu_seconds = self.cpu_seconds.min(wall);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Timeout,
    Oom,
    CompileError,
    RuntimeError,
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
    /// Empty when `status` is `ok`.
    pub exit_detail: String,
    /// Canonical return value in `call_entry` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_repr: Option<String>,
}

impl ExecutionReport {
    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// The observable result used for matching: the return value in
    /// function-call mode, captured stdout otherwise.
    pub fn observed(&self, mode: IoMode) -> &str {
        match mode {
            IoMode::FunctionCall => self.return_repr.as_deref().unwrap_or(""),
            IoMode::Stdio => &self.stdout,
        }
    }

    /// The exception type reported by the driver, if any.
    pub fn exception_kind(&self) -> Option<&str> {
        self.exit_detail
            .strip_prefix("exception ")
            .map(|rest| rest.split(':').next().unwrap_or(rest))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    CompileOnly,
    StdioRun,
    CallEntry,
    /// Runs guest assertion code with the entry point bound to `candidate`.
    Assert,
}

impl ExecMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::CompileOnly => "compile_only",
            ExecMode::StdioRun => "stdio_run",
            ExecMode::CallEntry => "call_entry",
            ExecMode::Assert => "assert",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecRequest<'a> {
    pub source: &'a str,
    pub mode: ExecMode,
    pub entry_point: Option<&'a str>,
    /// Stdin for `stdio_run`, canonical argument list for `call_entry`,
    /// assertion code for `assert`; ignored for `compile_only`.
    pub input: &'a str,
}

impl<'a> ExecRequest<'a> {
    pub fn compile(source: &'a str) -> Self {
        Self {
            source,
            mode: ExecMode::CompileOnly,
            entry_point: None,
            input: "",
        }
    }

    pub fn stdio(source: &'a str, stdin: &'a str) -> Self {
        Self {
            source,
            mode: ExecMode::StdioRun,
            entry_point: None,
            input: stdin,
        }
    }

    pub fn call(source: &'a str, entry_point: &'a str, args: &'a str) -> Self {
        Self {
            source,
            mode: ExecMode::CallEntry,
            entry_point: Some(entry_point),
            input: args,
        }
    }

    /// The request that runs `case` against `source` for a task in `mode`.
    pub fn for_case(source: &'a str, mode: IoMode, entry_point: Option<&'a str>, case: &'a TestCase) -> Self {
        let exec_mode = match (mode, case.kind) {
            (_, CaseKind::Assertion) => ExecMode::Assert,
            (IoMode::FunctionCall, CaseKind::Io) => ExecMode::CallEntry,
            (IoMode::Stdio, CaseKind::Io) => ExecMode::StdioRun,
        };
        Self {
            source,
            mode: exec_mode,
            entry_point,
            input: &case.input,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    ProcessDirect,
    Shim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub interpreter: PathBuf,
    #[serde(default)]
    pub backend: Backend,
    /// Path of the in-guest runner script; required for the shim backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shim_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp_root: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub max_workers: usize,
}

fn default_workers() -> usize {
    8
}

impl SandboxConfig {
    pub fn new(interpreter: impl Into<PathBuf>) -> Self {
        Self {
            interpreter: interpreter.into(),
            backend: Backend::ProcessDirect,
            shim_path: None,
            temp_root: None,
            max_workers: default_workers(),
        }
    }
}

/// Shared handle to a configured sandbox. Cheap to clone.
pub type SandboxHandle = Arc<Sandbox>;

pub struct Sandbox {
    config: SandboxConfig,
    slots: Slots,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox").field("config", &self.config).finish()
    }
}

impl Sandbox {
    /// Verifies the interpreter starts (and the shim exists, for that backend).
    pub fn new(config: SandboxConfig) -> Result<SandboxHandle, SandboxError> {
        let probe = Command::new(&config.interpreter)
            .arg("--version")
            .output()
            .map_err(|e| SandboxError::Unavailable(format!("{}: {e}", config.interpreter.display())))?;
        if !probe.status.success() {
            return Err(SandboxError::Unavailable(format!(
                "{} --version failed",
                config.interpreter.display()
            )));
        }
        if config.backend == Backend::Shim {
            match &config.shim_path {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(SandboxError::Unavailable(format!("shim not found at {}", p.display()))),
                None => return Err(SandboxError::Unavailable("shim backend needs a shim path".into())),
            }
        }
        let workers = config.max_workers.max(1);
        Ok(Arc::new(Self {
            config,
            slots: Slots::new(workers),
        }))
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn execute(&self, request: &ExecRequest<'_>, limits: &ResourceLimits) -> Result<ExecutionReport, SandboxError> {
        if matches!(request.mode, ExecMode::CallEntry | ExecMode::Assert) && request.entry_point.is_none() {
            return Err(SandboxError::InvalidRequest(format!(
                "{} mode needs an entry point",
                request.mode.as_str()
            )));
        }
        limits.validate().map_err(SandboxError::InvalidRequest)?;
        let _slot = self.slots.acquire();
        let mut builder = tempfile::Builder::new();
        builder.prefix("codegrad-");
        let workspace = match &self.config.temp_root {
            Some(root) => builder.tempdir_in(root)?,
            None => builder.tempdir()?,
        };
        // Assertion jobs have no shim protocol mode; they always run direct.
        match (self.config.backend, request.mode) {
            (Backend::Shim, mode) if mode != ExecMode::Assert => {
                let shim = self.config.shim_path.as_deref().expect("checked at construction");
                shim::execute(&self.config.interpreter, shim, workspace.path(), request, limits)
            }
            _ => self.execute_direct(workspace.path(), request, limits),
        }
    }

    fn execute_direct(
        &self,
        dir: &Path,
        request: &ExecRequest<'_>,
        limits: &ResourceLimits,
    ) -> Result<ExecutionReport, SandboxError> {
        let source_path = dir.join("candidate.py");
        let result_path = dir.join(".codegrad_result");
        let driver_path = dir.join(".codegrad_driver.py");
        let job_path = dir.join(".codegrad_job.json");
        std::fs::write(&source_path, request.source)?;
        std::fs::write(&driver_path, DRIVER_SOURCE)?;
        let job = serde_json::json!({
            "mode": request.mode.as_str(),
            "source_path": source_path,
            "entry_point": request.entry_point,
            "call_args": request.input,
            "assert_code": request.input,
            "result_path": result_path,
        });
        std::fs::write(&job_path, job.to_string())?;

        let mut cmd = Command::new(&self.config.interpreter);
        cmd.arg("-I").arg(&driver_path).arg(&job_path).current_dir(dir).env_clear();
        if let Some(path) = std::env::var_os("PATH") {
            cmd.env("PATH", path);
        }
        let stdin = if request.mode == ExecMode::StdioRun { request.input } else { "" };
        let raw = process::run_bounded(
            cmd,
            stdin.as_bytes(),
            Duration::from_secs_f64(limits.wall_seconds),
            limits.max_output_bytes,
            Some(process::GuestRlimits::from_limits(limits)),
        )?;

        let stdout = process::decode_truncated(&raw.stdout);
        let stderr = process::decode_truncated(&raw.stderr);
        let duration_ms = raw.duration.as_millis() as u64;
        let (status, exit_detail) = if raw.timed_out {
            (
                ExecStatus::Timeout,
                format!("wall-clock limit of {}s exceeded", limits.wall_seconds),
            )
        } else if process::cpu_limit_hit(raw.status) {
            (ExecStatus::Timeout, format!("cpu limit of {}s exceeded", limits.cpu_seconds))
        } else {
            classify_direct(raw.status, &stderr)
        };
        let return_repr = if status == ExecStatus::Ok && request.mode == ExecMode::CallEntry {
            match std::fs::read_to_string(&result_path) {
                Ok(text) => Some(text),
                Err(_) => {
                    return Ok(ExecutionReport {
                        status: ExecStatus::ProtocolError,
                        stdout,
                        stderr,
                        duration_ms,
                        exit_detail: "driver produced no return value".into(),
                        return_repr: None,
                    })
                }
            }
        } else {
            None
        };
        Ok(ExecutionReport {
            status,
            stdout,
            stderr,
            duration_ms,
            exit_detail,
            return_repr,
        })
    }
}

fn classify_direct(status: Option<std::process::ExitStatus>, stderr: &str) -> (ExecStatus, String) {
    let code = status.and_then(|s| s.code());
    match code {
        Some(0) => (ExecStatus::Ok, String::new()),
        Some(EXIT_COMPILE) => (ExecStatus::CompileError, last_line(stderr)),
        Some(EXIT_NO_ENTRY) => (ExecStatus::RuntimeError, "entry point not found".into()),
        Some(EXIT_PROTOCOL) => (ExecStatus::ProtocolError, last_line(stderr)),
        Some(EXIT_ARITY) => (ExecStatus::RuntimeError, exception_detail(stderr).unwrap_or_default()),
        _ => {
            let detail = exception_detail(stderr).unwrap_or_else(|| process::describe_exit(status));
            if detail.starts_with("exception MemoryError") {
                return (ExecStatus::Oom, detail);
            }
            (ExecStatus::RuntimeError, detail)
        }
    }
}

fn exception_detail(stderr: &str) -> Option<String> {
    stderr
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix(EXCEPTION_MARKER))
        .map(|rest| format!("exception {}", rest.trim()))
}

fn last_line(text: &str) -> String {
    let line = text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    if line.is_empty() {
        "no diagnostic".into()
    } else {
        line.to_string()
    }
}

struct Slots {
    free: Mutex<usize>,
    cond: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cond.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case: TestCase,
    pub report: ExecutionReport,
    /// `None` when the run did not finish with status `ok`.
    pub matched: Option<bool>,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.matched == Some(true)
    }
}

fn judge_case(mode: IoMode, case: &TestCase, report: &ExecutionReport) -> Option<bool> {
    if !report.is_ok() {
        return None;
    }
    Some(match case.kind {
        CaseKind::Assertion => true,
        CaseKind::Io => case.matches(mode, report.observed(mode)),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRunReport {
    pub cases: Vec<CaseOutcome>,
    pub all_passed: bool,
}

/// Runs every case of `task`'s suite against `source`. Stops early only when
/// the program does not compile.
pub fn run_tests(
    sandbox: &Sandbox,
    source: &str,
    task: &TaskSpec,
    limits: &ResourceLimits,
) -> Result<TestRunReport, SandboxError> {
    if task.test_suite.cases.is_empty() {
        return Err(SandboxError::InvalidRequest(format!("task {} has no test cases", task.task_id)));
    }
    let mut cases = Vec::with_capacity(task.test_suite.cases.len());
    for case in &task.test_suite.cases {
        let request = ExecRequest::for_case(source, task.io_mode, task.entry_point.as_deref(), case);
        let report = sandbox.execute(&request, limits)?;
        let compile_failed = report.status == ExecStatus::CompileError;
        let matched = judge_case(task.io_mode, case, &report);
        cases.push(CaseOutcome {
            case: case.clone(),
            report,
            matched,
        });
        if compile_failed {
            break;
        }
    }
    let all_passed = cases.len() == task.test_suite.cases.len() && cases.iter().all(CaseOutcome::passed);
    Ok(TestRunReport { cases, all_passed })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probes: Vec<CaseOutcome>,
}

/// Characters of stdout/stderr kept per probe when rendering for a prompt.
pub const PROBE_EXCERPT_BYTES: usize = 400;

impl ProbeReport {
    pub fn all_matched(&self) -> bool {
        self.probes.iter().all(CaseOutcome::passed)
    }

    /// Human-readable summary suitable for embedding in a review prompt.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.probes.iter().enumerate() {
            let label = if p.case.label.is_empty() { "probe" } else { &p.case.label };
            let verdict = match p.matched {
                Some(true) => "MATCHED",
                Some(false) => "MISMATCH",
                None => "NOT RUN TO COMPLETION",
            };
            let _ = writeln!(out, "Probe {} ({label}): {verdict}", i + 1);
            let _ = writeln!(out, "  input: {}", excerpt(&p.case.input));
            if p.case.kind == CaseKind::Io {
                let _ = writeln!(out, "  expected: {}", excerpt(&p.case.expected));
            }
            let _ = writeln!(out, "  status: {:?}", p.report.status);
            if let Some(ret) = &p.report.return_repr {
                let _ = writeln!(out, "  returned: {}", excerpt(ret));
            }
            if !p.report.stdout.is_empty() {
                let _ = writeln!(out, "  stdout: {}", excerpt(&p.report.stdout));
            }
            if !p.report.stderr.is_empty() {
                let _ = writeln!(out, "  stderr: {}", excerpt(&p.report.stderr));
            }
            if !p.report.exit_detail.is_empty() {
                let _ = writeln!(out, "  detail: {}", excerpt(&p.report.exit_detail));
            }
        }
        out
    }
}

fn excerpt(text: &str) -> String {
    let trimmed = text.trim_end();
    if trimmed.len() <= PROBE_EXCERPT_BYTES {
        return trimmed.to_string();
    }
    let mut cut = PROBE_EXCERPT_BYTES;
    while !trimmed.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}... [{} bytes omitted]", &trimmed[..cut], trimmed.len() - cut)
}

/// Runs the given probe cases against `source`.
pub fn run_probes(
    sandbox: &Sandbox,
    source: &str,
    io_mode: IoMode,
    entry_point: Option<&str>,
    probes: &[TestCase],
    limits: &ResourceLimits,
) -> Result<ProbeReport, SandboxError> {
    if probes.is_empty() {
        return Err(SandboxError::InvalidRequest("no probes to run".into()));
    }
    let mut out = Vec::with_capacity(probes.len());
    for case in probes {
        let request = ExecRequest::for_case(source, io_mode, entry_point, case);
        let report = sandbox.execute(&request, limits)?;
        let matched = judge_case(io_mode, case, &report);
        out.push(CaseOutcome {
            case: case.clone(),
            report,
            matched,
        });
    }
    Ok(ProbeReport { probes: out })
}

/// Probes visible to the loop: edge probes followed by the first sample case.
pub fn visible_probes(task: &TaskSpec) -> Vec<TestCase> {
    let mut probes = task.test_suite.edge_probes.clone();
    if let Some(sample) = task.sample_case() {
        if !probes.contains(sample) {
            probes.push(sample.clone());
        }
    }
    probes
}
