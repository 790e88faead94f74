use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ExecLimits, JobOutcome, Sandbox, SandboxError};
use crate::compose::SyntheticCandidate;
use crate::corpus::AtomCorpus;
use crate::mock::MockSet;
use crate::value::{Value, ValueType};

pub(crate) const TYPE_MISMATCH_PREFIX: &str = "TypeError: declared";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StageStatus {
    Ok,
    Raised,
    Timeout,
}

/// One atom call inside one traced input set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub atom_id: String,
    pub input: Value,
    /// `None` when the call returned the null value or did not complete.
    pub output: Option<Value>,
    pub status: StageStatus,
    pub error: Option<String>,
}

/// Execution of a whole chain on one mocked input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub candidate_id: String,
    pub input_set_index: usize,
    pub stage_records: Vec<StageRecord>,
    pub final_output: Option<Value>,
    pub overall_status: StageStatus,
}

impl ExecutionTrace {
    pub fn input(&self) -> Option<&Value> {
        self.stage_records.first().map(|s| &s.input)
    }
}

/// One stage of a traced job: which function to call and its declared types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    pub atom_id: String,
    pub fn_name: String,
    pub input_type: ValueType,
    pub output_type: ValueType,
}

/// Result of tracing some code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceOutcome {
    Traced(Vec<ExecutionTrace>),
    /// The code did not compile.
    CompileError(String),
    /// Compiled, but raised while loading or did not define a stage function.
    LoadError(String),
}

#[derive(Deserialize)]
struct RawStage {
    atom_id: String,
    output: Option<Tagged>,
    status: StageStatus,
    error: Option<String>,
}

#[derive(Deserialize)]
struct RawTrace {
    stages: Vec<RawStage>,
}

#[derive(Deserialize)]
struct Tagged {
    t: String,
    v: Json,
}

impl Tagged {
    /// Decodes under the declared type; `Err` carries the observed tag.
    fn decode(&self, declared: ValueType) -> Result<Value, String> {
        let observed = if self.t == "List" && declared.is_list() {
            declared
        } else {
            self.t.parse::<ValueType>().map_err(|_| self.t.clone())?
        };
        if observed != declared {
            return Err(observed.tag().to_string());
        }
        Value::from_json(&self.v, declared).map_err(|e| e.to_string())
    }
}

fn killed_traces(candidate_id: &str, stages: &[StagePlan], inputs: &[Value]) -> Vec<ExecutionTrace> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, input)| ExecutionTrace {
            candidate_id: candidate_id.to_string(),
            input_set_index: i,
            stage_records: vec![StageRecord {
                atom_id: stages[0].atom_id.clone(),
                input: input.clone(),
                output: None,
                status: StageStatus::Timeout,
                error: Some("wall clock limit exceeded".into()),
            }],
            final_output: None,
            overall_status: StageStatus::Timeout,
        })
        .collect()
}

fn convert(candidate_id: &str, index: usize, raw: RawTrace, stages: &[StagePlan], input: &Value) -> ExecutionTrace {
    let mut records = Vec::with_capacity(raw.stages.len());
    let mut current = input.clone();
    let mut overall = StageStatus::Ok;
    for (plan, rs) in stages.iter().zip(raw.stages) {
        let mut rec = StageRecord {
            atom_id: rs.atom_id,
            input: current.clone(),
            output: None,
            status: rs.status,
            error: rs.error,
        };
        if rs.status != StageStatus::Ok {
            overall = rs.status;
            records.push(rec);
            break;
        }
        match rs.output.as_ref().map(|t| t.decode(plan.output_type)) {
            None => {
                // A null output ends the trace; later stages are not recorded.
                records.push(rec);
                break;
            }
            Some(Ok(v)) => {
                current = v.clone();
                rec.output = Some(v);
                records.push(rec);
            }
            Some(Err(observed)) => {
                rec.status = StageStatus::Raised;
                rec.error = Some(format!("{TYPE_MISMATCH_PREFIX} {}, returned {observed}", plan.output_type));
                overall = StageStatus::Raised;
                records.push(rec);
                break;
            }
        }
    }
    let complete = records.len() == stages.len() && overall == StageStatus::Ok;
    let final_output = if complete { records.last().and_then(|r| r.output.clone()) } else { None };
    ExecutionTrace {
        candidate_id: candidate_id.to_string(),
        input_set_index: index,
        stage_records: records,
        final_output,
        overall_status: overall,
    }
}

/// Traces `code` by calling each stage function in order on every input.
pub fn trace_stages(
    sandbox: &Sandbox,
    candidate_id: &str,
    code: &str,
    stages: &[StagePlan],
    inputs: &[Value],
    limits: &ExecLimits,
) -> Result<TraceOutcome, SandboxError> {
    if stages.is_empty() {
        return Err(SandboxError::Plan("no stages to trace".into()));
    }
    let job = serde_json::json!({
        "mode": "trace",
        "code": code,
        "stages": stages.iter().map(|s| serde_json::json!({"atom_id": s.atom_id, "fn_name": s.fn_name})).collect::<Vec<_>>(),
        "inputs": inputs.iter().map(Value::to_json).collect::<Vec<_>>(),
    });
    let reply = match sandbox.run_job(&job, limits)? {
        JobOutcome::Killed => return Ok(TraceOutcome::Traced(killed_traces(candidate_id, stages, inputs))),
        JobOutcome::Reply(r) => r,
    };
    let detail = || reply.get("detail").and_then(Json::as_str).unwrap_or("").to_string();
    match reply.get("status").and_then(Json::as_str) {
        Some("ok") => {
            let raw: Vec<RawTrace> = serde_json::from_value(reply.get("traces").cloned().unwrap_or(Json::Null))
                .map_err(|e| SandboxError::JobFailure(format!("bad trace reply: {e}")))?;
            if raw.len() != inputs.len() {
                return Err(SandboxError::JobFailure(format!(
                    "runner returned {} traces for {} inputs",
                    raw.len(),
                    inputs.len()
                )));
            }
            Ok(TraceOutcome::Traced(
                raw.into_iter()
                    .zip(inputs)
                    .enumerate()
                    .map(|(i, (r, input))| convert(candidate_id, i, r, stages, input))
                    .collect(),
            ))
        }
        Some("compile_error") => Ok(TraceOutcome::CompileError(detail())),
        Some("load_error") => Ok(TraceOutcome::LoadError(detail())),
        Some("timeout") => Ok(TraceOutcome::Traced(killed_traces(candidate_id, stages, inputs))),
        Some("serialization_failure") => Err(SandboxError::SerializationFailure(detail())),
        _ => Err(SandboxError::JobFailure(format!("unexpected runner reply: {reply}"))),
    }
}

/// Stage plans for a candidate's chain.
pub fn plan_for(candidate: &SyntheticCandidate, corpus: &AtomCorpus) -> Result<Vec<StagePlan>, SandboxError> {
    candidate
        .chain
        .atom_ids
        .iter()
        .map(|id| {
            let a = corpus.get(id).ok_or_else(|| SandboxError::Plan(format!("unknown atom id {id:?}")))?;
            Ok(StagePlan {
                atom_id: a.id.clone(),
                fn_name: a.fn_name.clone(),
                input_type: a.input_type,
                output_type: a.output_type,
            })
        })
        .collect()
}

/// Runs the candidate's chain on every mocked input, one trace per input.
/// Code that fails to compile or load yields traces whose first stage is
/// `RAISED`, so the validity filter rejects it under the runtime-error rule.
pub fn execute_chain(
    sandbox: &Sandbox,
    corpus: &AtomCorpus,
    candidate: &SyntheticCandidate,
    inputs: &MockSet,
    limits: &ExecLimits,
) -> Result<Vec<ExecutionTrace>, SandboxError> {
    let stages = plan_for(candidate, corpus)?;
    match trace_stages(sandbox, &candidate.id, &candidate.response, &stages, &inputs.values, limits)? {
        TraceOutcome::Traced(t) => Ok(t),
        TraceOutcome::CompileError(detail) | TraceOutcome::LoadError(detail) => Ok(inputs
            .values
            .iter()
            .enumerate()
            .map(|(i, input)| ExecutionTrace {
                candidate_id: candidate.id.clone(),
                input_set_index: i,
                stage_records: vec![StageRecord {
                    atom_id: stages[0].atom_id.clone(),
                    input: input.clone(),
                    output: None,
                    status: StageStatus::Raised,
                    error: Some(detail.clone()),
                }],
                final_output: None,
                overall_status: StageStatus::Raised,
            })
            .collect()),
    }
}
