use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ExecLimits, JobOutcome, Sandbox, SandboxError, StageStatus};

/// Verdict of running code against its unit tests. `reward` is 1 only when
/// every test passed and execution finished normally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeResult {
    pub reward: u8,
    pub tests_total: usize,
    pub tests_passed: usize,
    pub failure_detail: Option<String>,
    pub duration_ms: u64,
    pub status: StageStatus,
}

impl JudgeResult {
    fn new(
        tests_total: usize,
        tests_passed: usize,
        status: StageStatus,
        failure_detail: Option<String>,
        duration_ms: u64,
    ) -> Self {
        let reward = u8::from(tests_passed == tests_total && status == StageStatus::Ok);
        JudgeResult { reward, tests_total, tests_passed, failure_detail, duration_ms, status }
    }
}

#[derive(Deserialize)]
struct RawJudge {
    tests_total: usize,
    tests_passed: usize,
    status: StageStatus,
    failure_detail: Option<String>,
}

/// Runs `code` followed by each assertion, in order, in a fresh process.
pub fn run_unit_tests(
    sandbox: &Sandbox,
    code: &str,
    tests: &[String],
    limits: &ExecLimits,
) -> Result<JudgeResult, SandboxError> {
    if tests.is_empty() {
        return Err(SandboxError::NoTests);
    }
    let started = Instant::now();
    let job = serde_json::json!({ "mode": "judge", "code": code, "tests": tests });
    let outcome = sandbox.run_job(&job, limits)?;
    let elapsed = started.elapsed().as_millis() as u64;
    let reply = match outcome {
        JobOutcome::Killed => {
            return Ok(JudgeResult::new(
                tests.len(),
                0,
                StageStatus::Timeout,
                Some(format!("wall clock limit of {} ms exceeded", limits.wall_clock_ms)),
                elapsed,
            ))
        }
        JobOutcome::Reply(r) => r,
    };
    match reply.get("status").and_then(Json::as_str) {
        Some("ok") => {
            let raw: RawJudge = serde_json::from_value(reply.get("judge").cloned().unwrap_or(Json::Null))
                .map_err(|e| SandboxError::JobFailure(format!("bad judge reply: {e}")))?;
            Ok(JudgeResult::new(raw.tests_total, raw.tests_passed, raw.status, raw.failure_detail, elapsed))
        }
        Some("timeout") => {
            Ok(JudgeResult::new(tests.len(), 0, StageStatus::Timeout, Some("job deadline reached".into()), elapsed))
        }
        _ => Err(SandboxError::JobFailure(format!("unexpected runner reply: {reply}"))),
    }
}

/// Contents of the first fenced code block in `response`, or the whole
/// response when it has no fence. The fence's language tag is dropped. An
/// unclosed fence extends to the end of the text.
pub fn extract_code_block(response: &str) -> String {
    let Some(open) = response.find("```") else {
        return response.to_string();
    };
    let after_tag = &response[open + 3..];
    let body = match after_tag.find('\n') {
        Some(nl) => &after_tag[nl + 1..],
        None => return String::new(),
    };
    let mut end = body.len();
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            end = offset;
            break;
        }
        offset += line.len();
    }
    body[..end].to_string()
}
