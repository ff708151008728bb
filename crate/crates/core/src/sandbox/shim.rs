//! Host side of the shim JSON stdio protocol: one job object in, one result
//! object out, both tagged `"proto": 1`.

use std::path::Path;
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{process, ExecMode, ExecRequest, ExecStatus, ExecutionReport, ResourceLimits, SandboxError};

pub const SHIM_PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimLimits {
    pub cpu_seconds: f64,
    pub memory_mb: u64,
    pub max_output_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShimJob {
    pub proto: u32,
    pub source: String,
    /// `compile_only`, `stdio_run` or `call_entry`.
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_args: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdin_text: Option<String>,
    pub limits: ShimLimits,
}

impl ShimJob {
    pub fn from_request(request: &ExecRequest<'_>, limits: &ResourceLimits) -> Result<Self, SandboxError> {
        let (call_args, stdin_text) = match request.mode {
            ExecMode::CompileOnly => (None, None),
            ExecMode::StdioRun => (None, Some(request.input.to_string())),
            ExecMode::CallEntry => (Some(request.input.to_string()), None),
            ExecMode::Assert => {
                return Err(SandboxError::InvalidRequest(
                    "assertion jobs are not part of the shim protocol".into(),
                ))
            }
        };
        Ok(Self {
            proto: SHIM_PROTOCOL_VERSION,
            source: request.source.to_string(),
            mode: request.mode.as_str().to_string(),
            entry_point: request.entry_point.map(str::to_string),
            call_args,
            stdin_text,
            limits: ShimLimits {
                cpu_seconds: limits.cpu_seconds,
                memory_mb: limits.memory_mb,
                max_output_bytes: limits.max_output_bytes,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimResult {
    pub proto: u32,
    /// `ok`, `timeout`, `oom`, `compile_error` or `runtime_error`.
    pub status: String,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub return_repr: Option<String>,
    #[serde(default)]
    pub duration_ms: u64,
}

impl ShimResult {
    /// Parses and checks one result object.
    pub fn parse(text: &str) -> Result<Self, String> {
        let result: ShimResult = serde_json::from_str(text.trim()).map_err(|e| format!("malformed shim result: {e}"))?;
        if result.proto != SHIM_PROTOCOL_VERSION {
            return Err(format!("unsupported shim protocol version {}", result.proto));
        }
        result.exec_status()?;
        Ok(result)
    }

    fn exec_status(&self) -> Result<ExecStatus, String> {
        Ok(match self.status.as_str() {
            "ok" => ExecStatus::Ok,
            "timeout" => ExecStatus::Timeout,
            "oom" => ExecStatus::Oom,
            "compile_error" => ExecStatus::CompileError,
            "runtime_error" => ExecStatus::RuntimeError,
            other => return Err(format!("unknown shim status `{other}`")),
        })
    }
}

pub(super) fn execute(
    interpreter: &Path,
    shim: &Path,
    dir: &Path,
    request: &ExecRequest<'_>,
    limits: &ResourceLimits,
) -> Result<ExecutionReport, SandboxError> {
    let job = ShimJob::from_request(request, limits)?;
    let payload = serde_json::to_vec(&job).map_err(|e| SandboxError::InvalidRequest(e.to_string()))?;
    let mut cmd = Command::new(interpreter);
    cmd.arg(shim).current_dir(dir).env_clear();
    if let Some(path) = std::env::var_os("PATH") {
        cmd.env("PATH", path);
    }
    // The result object carries its own copy of stdout/stderr, so the host
    // buffer must fit both plus JSON escaping overhead.
    let capture = limits.max_output_bytes.saturating_mul(8).saturating_add(64 * 1024);
    let raw = process::run_bounded(cmd, &payload, Duration::from_secs_f64(limits.wall_seconds), capture, None)?;
    let duration_ms = raw.duration.as_millis() as u64;
    let stderr_text = process::decode_truncated(&raw.stderr);

    if raw.timed_out {
        return Ok(ExecutionReport {
            status: ExecStatus::Timeout,
            stdout: String::new(),
            stderr: truncate(&stderr_text, limits.max_output_bytes),
            duration_ms,
            exit_detail: format!("wall-clock limit of {}s exceeded", limits.wall_seconds),
            return_repr: None,
        });
    }
    let protocol_error = |detail: String| ExecutionReport {
        status: ExecStatus::ProtocolError,
        stdout: String::new(),
        stderr: truncate(&stderr_text, limits.max_output_bytes),
        duration_ms,
        exit_detail: detail,
        return_repr: None,
    };
    if raw.status.and_then(|s| s.code()) != Some(0) {
        return Ok(protocol_error(format!("shim failed: {}", process::describe_exit(raw.status))));
    }
    let text = process::decode_truncated(&raw.stdout);
    let result = match ShimResult::parse(&text) {
        Ok(r) => r,
        Err(e) => return Ok(protocol_error(e)),
    };
    let status = result.exec_status().expect("validated in parse");
    let exit_detail = match status {
        ExecStatus::Ok => String::new(),
        ExecStatus::Timeout => format!("cpu limit of {}s exceeded", limits.cpu_seconds),
        ExecStatus::Oom => format!("memory limit of {} MB exceeded", limits.memory_mb),
        _ => result
            .stderr
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .unwrap_or("guest failure")
            .trim()
            .to_string(),
    };
    Ok(ExecutionReport {
        status,
        stdout: truncate(&result.stdout, limits.max_output_bytes),
        stderr: truncate(&result.stderr, limits.max_output_bytes),
        duration_ms: result.duration_ms,
        exit_detail,
        return_repr: if status == ExecStatus::Ok { result.return_repr } else { None },
    })
}

fn truncate(text: &str, max: usize) -> String {
    if text.len() <= max {
        return text.to_string();
    }
    let mut cut = max;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    text[..cut].to_string()
}
