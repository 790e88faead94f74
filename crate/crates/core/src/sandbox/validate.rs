use serde::{Deserialize, Serialize};

use super::trace::TYPE_MISMATCH_PREFIX;
use super::{trace_stages, ExecLimits, Sandbox, SandboxError, StagePlan, StageStatus, TraceOutcome};
use crate::corpus::AtomicFunction;
use crate::mock::{mock_input_sets, MockConfig};

/// Pre-flight check of one atom on a single mocked input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub atom_id: String,
    pub compiles: bool,
    pub defines_fn: bool,
    /// The call finished without raising or timing out.
    pub runs: bool,
    pub returns_declared_type: bool,
    pub detail: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.compiles && self.defines_fn && self.runs && self.returns_declared_type
    }
}

pub fn validate_atom(
    atom: &AtomicFunction,
    sandbox: &Sandbox,
    limits: &ExecLimits,
    seed: u64,
) -> Result<ValidationReport, SandboxError> {
    let input = mock_input_sets(atom.input_type, 1, seed, &MockConfig::default());
    let stage = StagePlan {
        atom_id: atom.id.clone(),
        fn_name: atom.fn_name.clone(),
        input_type: atom.input_type,
        output_type: atom.output_type,
    };
    let mut report = ValidationReport {
        atom_id: atom.id.clone(),
        compiles: false,
        defines_fn: false,
        runs: false,
        returns_declared_type: false,
        detail: None,
    };
    match trace_stages(sandbox, &atom.id, &atom.code, &[stage], &input.values, limits) {
        Err(SandboxError::SerializationFailure(d)) => {
            report.compiles = true;
            report.defines_fn = true;
            report.runs = true;
            report.detail = Some(d);
        }
        Err(e) => return Err(e),
        Ok(TraceOutcome::CompileError(d)) => report.detail = Some(d),
        Ok(TraceOutcome::LoadError(d)) => {
            report.compiles = true;
            report.detail = Some(d);
        }
        Ok(TraceOutcome::Traced(traces)) => {
            report.compiles = true;
            report.defines_fn = true;
            let rec = &traces[0].stage_records[0];
            let mismatch = rec.error.as_deref().is_some_and(|e| e.starts_with(TYPE_MISMATCH_PREFIX));
            report.runs = rec.status == StageStatus::Ok || mismatch;
            report.returns_declared_type = rec.status == StageStatus::Ok && rec.output.is_some();
            report.detail = match (&rec.error, &rec.output) {
                (Some(e), _) => Some(e.clone()),
                (None, None) if rec.status == StageStatus::Ok => Some("returned None".into()),
                _ => None,
            };
        }
    }
    Ok(report)
}
