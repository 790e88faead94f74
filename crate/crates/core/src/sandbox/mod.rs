//! Isolated execution of candidate code.
//!
//! Every job runs in a fresh interpreter process started in its own
//! temporary working directory and process group, with rlimits applied
//! before `exec`. The child runs a fixed runner program (`runner.py`) that
//! reads one JSON job on stdin and prints one JSON line. Inside the child the
//! runner blocks dangerous imports, confines `open` to the working
//! directory, caps printed output and arms an interval timer slightly
//! shorter than the wall clock; the parent kills the whole process group
//! when the wall clock runs out regardless.

mod judge;
mod pool;
mod trace;
mod validate;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use wait_timeout::ChildExt;

pub use judge::{extract_code_block, run_unit_tests, JudgeResult};
pub use pool::{default_workers, SandboxPool};
pub use trace::{execute_chain, trace_stages, ExecutionTrace, StagePlan, StageRecord, StageStatus, TraceOutcome};
pub use validate::{validate_atom, ValidationReport};

const RUNNER: &str = include_str!("runner.py");

/// Environment variable naming the interpreter used for sandbox jobs.
pub const INTERPRETER_ENV: &str = "CHAINSYNTH_PYTHON";

/// Largest reply the parent will read from a runner.
const MAX_REPLY_BYTES: usize = 64 << 20;
const MAX_STDERR_BYTES: usize = 16 << 10;

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("sandbox interpreter {0:?} is unavailable: {1}")]
    Unavailable(PathBuf, String),
    #[error("failed to spawn sandbox job: {0}")]
    SpawnFailure(#[source] std::io::Error),
    #[error("sandbox job failed: {0}")]
    JobFailure(String),
    #[error("value not encodable in the interchange format: {0}")]
    SerializationFailure(String),
    #[error("invalid limits: {0}")]
    InvalidLimits(&'static str),
    #[error("no unit tests supplied")]
    NoTests,
    #[error("{0}")]
    Plan(String),
}

/// Per-job resource limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    pub wall_clock_ms: u64,
    pub max_output_bytes: u64,
    pub max_processes: u64,
    /// Address-space cap for the child.
    pub max_memory_bytes: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits { wall_clock_ms: 5000, max_output_bytes: 65536, max_processes: 1, max_memory_bytes: 1 << 30 }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.wall_clock_ms == 0 {
            return Err(SandboxError::InvalidLimits("wall_clock_ms must be positive"));
        }
        if self.max_output_bytes == 0 {
            return Err(SandboxError::InvalidLimits("max_output_bytes must be positive"));
        }
        if self.max_processes == 0 {
            return Err(SandboxError::InvalidLimits("max_processes must be positive"));
        }
        if self.max_memory_bytes == 0 {
            return Err(SandboxError::InvalidLimits("max_memory_bytes must be positive"));
        }
        Ok(())
    }

    pub fn wall_clock(&self) -> Duration {
        Duration::from_millis(self.wall_clock_ms)
    }
}

/// What came back from one runner process.
#[derive(Debug)]
pub(crate) enum JobOutcome {
    /// The runner printed a reply line.
    Reply(Json),
    /// The wall clock expired and the process group was killed.
    Killed,
}

/// Handle on the sandbox interpreter.
#[derive(Debug, Clone)]
pub struct Sandbox {
    interpreter: PathBuf,
}

impl Default for Sandbox {
    fn default() -> Self {
        Sandbox::from_env()
    }
}

impl Sandbox {
    pub fn new(interpreter: impl Into<PathBuf>) -> Self {
        Sandbox { interpreter: interpreter.into() }
    }

    /// Uses `$CHAINSYNTH_PYTHON`, falling back to `python3` on `PATH`.
    pub fn from_env() -> Self {
        let interpreter =
            std::env::var_os(INTERPRETER_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("python3"));
        Sandbox::new(interpreter)
    }

    pub fn interpreter(&self) -> &Path {
        &self.interpreter
    }

    /// Checks that the interpreter starts and is Python 3.
    pub fn probe(&self) -> Result<(), SandboxError> {
        let out = Command::new(&self.interpreter)
            .args(["-I", "-c", "import sys; print(sys.version_info[0])"])
            .stdin(Stdio::null())
            .output()
            .map_err(|e| SandboxError::Unavailable(self.interpreter.clone(), e.to_string()))?;
        match String::from_utf8_lossy(&out.stdout).trim() {
            "3" => Ok(()),
            other => Err(SandboxError::Unavailable(
                self.interpreter.clone(),
                format!("unexpected version probe output {other:?}"),
            )),
        }
    }

    pub(crate) fn run_job(&self, job: &Json, limits: &ExecLimits) -> Result<JobOutcome, SandboxError> {
        limits.validate()?;
        let workdir =
            tempfile::Builder::new().prefix("chainsynth-job-").tempdir().map_err(SandboxError::SpawnFailure)?;
        let mut job = job.clone();
        job["limits"] = serde_json::json!({
            "wall_clock_ms": limits.wall_clock_ms,
            "max_output_bytes": limits.max_output_bytes,
        });
        let payload = serde_json::to_vec(&job).map_err(|e| SandboxError::JobFailure(e.to_string()))?;

        let mut cmd = Command::new(&self.interpreter);
        cmd.args(["-I", "-S", "-B", "-X", "utf8", "-c", RUNNER])
            .current_dir(workdir.path())
            .env_clear()
            .env("HOME", workdir.path())
            .env("TMPDIR", workdir.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        confine(&mut cmd, limits);

        let started = Instant::now();
        let mut child = cmd.spawn().map_err(SandboxError::SpawnFailure)?;
        let pgid = child.id() as libc::pid_t;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // A child that dies early closes the pipe; that surfaces below.
            let _ = stdin.write_all(&payload);
        });
        let stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || read_capped(stdout, MAX_REPLY_BYTES));
        let stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || read_capped(stderr, MAX_STDERR_BYTES));

        let remaining = limits.wall_clock().saturating_sub(started.elapsed());
        let status = child.wait_timeout(remaining).map_err(SandboxError::SpawnFailure)?;
        // Reap anything the job left behind in its group.
        kill_group(pgid);
        let status = match status {
            Some(s) => Some(s),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                None
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();

        let Some(status) = status else {
            return Ok(JobOutcome::Killed);
        };
        if !status.success() {
            return Err(SandboxError::JobFailure(format!(
                "runner exited with {status}: {}",
                String::from_utf8_lossy(&err).trim()
            )));
        }
        let text = String::from_utf8_lossy(&out);
        let line = text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        serde_json::from_str(line)
            .map(JobOutcome::Reply)
            .map_err(|e| SandboxError::JobFailure(format!("malformed runner reply ({e}): {line:.200}")))
    }
}

fn read_capped(mut r: impl Read, cap: usize) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match r.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                if buf.len() < cap {
                    let take = n.min(cap - buf.len());
                    buf.extend_from_slice(&chunk[..take]);
                }
            }
        }
    }
    buf
}

#[cfg(unix)]
fn kill_group(pgid: libc::pid_t) {
    // SAFETY: signalling a process group we created; failure (ESRCH) is fine.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

#[cfg(unix)]
fn confine(cmd: &mut Command, limits: &ExecLimits) {
    use std::os::unix::process::CommandExt;

    let cpu_secs = limits.wall_clock_ms.div_ceil(1000) + 1;
    let nproc = limits.max_processes;
    let mem = limits.max_memory_bytes;
    cmd.process_group(0);
    // SAFETY: only async-signal-safe setrlimit calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            let set = |res, value: u64| {
                let lim = libc::rlimit { rlim_cur: value as libc::rlim_t, rlim_max: value as libc::rlim_t };
                libc::setrlimit(res, &lim);
            };
            set(libc::RLIMIT_CPU, cpu_secs);
            set(libc::RLIMIT_AS, mem);
            set(libc::RLIMIT_FSIZE, 16 << 20);
            set(libc::RLIMIT_CORE, 0);
            // Counted per user; root ignores it, the runner's import guard
            // still blocks process creation.
            if libc::geteuid() != 0 {
                set(libc::RLIMIT_NPROC, nproc);
            }
            Ok(())
        });
    }
}

#[cfg(test)]
pub(crate) fn test_sandbox() -> Sandbox {
    let sb = Sandbox::from_env();
    sb.probe().expect("a python3 interpreter is required for sandbox tests");
    sb
}
