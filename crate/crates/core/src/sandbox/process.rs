//! Child-process plumbing shared by both backends: wall-clock kill, bounded
//! output capture and exit classification.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::SandboxError;

pub(crate) struct RawOutcome {
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub duration: Duration,
}

/// Kernel limits applied to the child before it execs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GuestRlimits {
    pub cpu_seconds: u64,
    pub memory_bytes: u64,
}

impl GuestRlimits {
    pub fn from_limits(limits: &super::ResourceLimits) -> Self {
        Self {
            cpu_seconds: limits.cpu_seconds.ceil().max(1.0) as u64,
            memory_bytes: limits.memory_mb.saturating_mul(1024 * 1024),
        }
    }
}

fn set_rlimit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: soft as libc::rlim_t,
        rlim_max: hard as libc::rlim_t,
    };
    // SAFETY: setrlimit only reads the struct passed by pointer.
    if unsafe { libc::setrlimit(resource, &lim) } == 0 {
        Ok(())
    } else {
        Err(io::Error::last_os_error())
    }
}

/// Spawns `cmd` in its own process group, feeds `stdin`, and kills the whole
/// group once `wall` elapses. At most `max_output` bytes of each stream are kept.
pub(crate) fn run_bounded(
    mut cmd: Command,
    stdin: &[u8],
    wall: Duration,
    max_output: usize,
    rlimits: Option<GuestRlimits>,
) -> Result<RawOutcome, SandboxError> {
    cmd.stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(r) = rlimits {
        // SAFETY: the closure only calls async-signal-safe setrlimit.
        unsafe {
            cmd.pre_exec(move || {
                set_rlimit(libc::RLIMIT_CPU, r.cpu_seconds, r.cpu_seconds + 1)?;
                set_rlimit(libc::RLIMIT_AS, r.memory_bytes, r.memory_bytes)?;
                Ok(())
            });
        }
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
            SandboxError::Unavailable(format!("cannot start guest interpreter: {e}"))
        }
        _ => SandboxError::Workspace(e),
    })?;

    let feeder = child.stdin.take().map(|mut pipe| {
        let data = stdin.to_vec();
        thread::spawn(move || {
            // The guest may exit without reading; a broken pipe is expected then.
            let _ = pipe.write_all(&data);
        })
    });
    let out_reader = capture(child.stdout.take(), max_output);
    let err_reader = capture(child.stderr.take(), max_output);

    let (status, timed_out) = wait_with_deadline(&mut child, start + wall)?;
    let duration = start.elapsed();

    if let Some(f) = feeder {
        let _ = f.join();
    }
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(RawOutcome {
        status,
        timed_out,
        stdout,
        stderr,
        duration,
    })
}

fn wait_with_deadline(child: &mut Child, deadline: Instant) -> Result<(Option<ExitStatus>, bool), SandboxError> {
    let mut pause = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait().map_err(SandboxError::Workspace)? {
            // Reap stragglers that inherited the pipes.
            kill_group(child.id());
            return Ok((Some(status), false));
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(child.id());
            let status = child.wait().ok();
            return Ok((status, true));
        }
        thread::sleep(pause.min(deadline - now));
        pause = (pause * 2).min(Duration::from_millis(20));
    }
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall on a process group we created; errors (ESRCH) are harmless.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

fn capture<R: Read + Send + 'static>(pipe: Option<R>, limit: usize) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let Some(mut pipe) = pipe else {
            return kept;
        };
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = limit.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(_) => break,
            }
        }
        kept
    })
}

/// Decodes captured bytes, dropping a multi-byte character cut by truncation.
pub(crate) fn decode_truncated(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(e) if e.error_len().is_none() => String::from_utf8_lossy(&bytes[..e.valid_up_to()]).into_owned(),
        Err(_) => {
            let mut text = String::from_utf8_lossy(bytes).into_owned();
            while text.len() > bytes.len() {
                text.pop();
            }
            text
        }
    }
}

/// Whether the child was stopped by the kernel CPU limit.
pub(crate) fn cpu_limit_hit(status: Option<ExitStatus>) -> bool {
    status.and_then(|s| s.signal()) == Some(libc::SIGXCPU)
}

pub(crate) fn describe_exit(status: Option<ExitStatus>) -> String {
    match status {
        Some(s) => match (s.code(), s.signal()) {
            (Some(code), _) => format!("exit code {code}"),
            (None, Some(sig)) => format!("killed by signal {sig}"),
            _ => "unknown exit".into(),
        },
        None => "no exit status".into(),
    }
}
