//! Validity rules applied to traced candidates, and unit-test emission for
//! the survivors.
//!
//! | rule | fires when |
//! |------|------------|
//! | R1   | any stage of any trace is `RAISED` or `TIMEOUT` |
//! | R2   | any completed stage returned the null value |
//! | R3   | some stage position maps input to an equal output on every trace (or on any trace, under [`IdentityRule::Any`]) |
//! | R4   | at least two traces, all ran to completion, and all final outputs are equal |
//!
//! Equality is structural on decoded values.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::compose::{SyntheticCandidate, ENTRY_NAME};
use crate::sandbox::{ExecutionTrace, StageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[serde(rename = "R1_RUNTIME_ERROR")]
    RuntimeError,
    #[serde(rename = "R2_NONE_OUTPUT")]
    NoneOutput,
    #[serde(rename = "R3_IDENTITY_STAGE")]
    IdentityStage,
    #[serde(rename = "R4_CONSTANT_OUTPUT")]
    ConstantOutput,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::RuntimeError, Rule::NoneOutput, Rule::IdentityStage, Rule::ConstantOutput];

    pub fn code(self) -> &'static str {
        match self {
            Rule::RuntimeError => "R1_RUNTIME_ERROR",
            Rule::NoneOutput => "R2_NONE_OUTPUT",
            Rule::IdentityStage => "R3_IDENTITY_STAGE",
            Rule::ConstantOutput => "R4_CONSTANT_OUTPUT",
        }
    }
}

/// How many traces must show a stage as identity before R3 fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentityRule {
    #[default]
    All,
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub candidate_id: String,
    pub accepted: bool,
    pub violated_rules: BTreeSet<Rule>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("traces are incomplete: {0}")]
    IncompleteTraces(String),
    #[error("candidate {0} was not accepted")]
    NotAccepted(String),
}

fn check_complete(traces: &[ExecutionTrace]) -> Result<(), FilterError> {
    let first = traces.first().ok_or_else(|| FilterError::IncompleteTraces("no traces".into()))?;
    for (i, t) in traces.iter().enumerate() {
        if t.input_set_index != i {
            return Err(FilterError::IncompleteTraces(format!("expected input set {i}, found {}", t.input_set_index)));
        }
        if t.candidate_id != first.candidate_id {
            return Err(FilterError::IncompleteTraces(format!(
                "mixed candidates {} and {}",
                first.candidate_id, t.candidate_id
            )));
        }
        if t.stage_records.is_empty() {
            return Err(FilterError::IncompleteTraces(format!("input set {i} has no stages")));
        }
    }
    Ok(())
}

fn is_identity(t: &ExecutionTrace, stage: usize) -> bool {
    t.stage_records.get(stage).is_some_and(|s| s.status == StageStatus::Ok && s.output.as_ref() == Some(&s.input))
}

/// Evaluates every rule against the traces of one candidate; traces must be
/// ordered by input-set index starting at 0.
pub fn check_validity(traces: &[ExecutionTrace], identity: IdentityRule) -> Result<ValidityVerdict, FilterError> {
    check_complete(traces)?;
    let mut violated = BTreeSet::new();

    if traces.iter().flat_map(|t| &t.stage_records).any(|s| s.status != StageStatus::Ok) {
        violated.insert(Rule::RuntimeError);
    }
    if traces.iter().flat_map(|t| &t.stage_records).any(|s| s.status == StageStatus::Ok && s.output.is_none()) {
        violated.insert(Rule::NoneOutput);
    }
    let max_stages = traces.iter().map(|t| t.stage_records.len()).max().unwrap_or(0);
    let identity_fires = (0..max_stages).any(|j| match identity {
        IdentityRule::All => traces.iter().all(|t| is_identity(t, j)),
        IdentityRule::Any => traces.iter().any(|t| is_identity(t, j)),
    });
    if identity_fires {
        violated.insert(Rule::IdentityStage);
    }
    let finals: Option<Vec<_>> = traces
        .iter()
        .map(|t| (t.overall_status == StageStatus::Ok).then_some(t.final_output.as_ref()).flatten())
        .collect();
    if let Some(finals) = finals {
        if finals.len() >= 2 && finals.windows(2).all(|w| w[0] == w[1]) {
            violated.insert(Rule::ConstantOutput);
        }
    }

    Ok(ValidityVerdict {
        candidate_id: traces[0].candidate_id.clone(),
        accepted: violated.is_empty(),
        violated_rules: violated,
    })
}

/// `assert <entry>(input) == expected` for one completed trace.
pub fn assertion_for(entry: &str, trace: &ExecutionTrace) -> Option<String> {
    let input = trace.input()?;
    let out = trace.final_output.as_ref()?;
    Some(format!("assert {entry}({}) == {}", input.to_python_literal(), out.to_python_literal()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTestSet {
    pub candidate_id: String,
    pub assertions: Vec<String>,
}

/// One assertion per trace for an accepted candidate.
pub fn emit_unit_tests(
    candidate: &SyntheticCandidate,
    traces: &[ExecutionTrace],
    identity: IdentityRule,
) -> Result<UnitTestSet, FilterError> {
    let verdict = check_validity(traces, identity)?;
    if !verdict.accepted || verdict.candidate_id != candidate.id {
        return Err(FilterError::NotAccepted(candidate.id.clone()));
    }
    let assertions = traces
        .iter()
        .map(|t| assertion_for(ENTRY_NAME, t).ok_or_else(|| FilterError::NotAccepted(candidate.id.clone())))
        .collect::<Result<_, _>>()?;
    Ok(UnitTestSet { candidate_id: candidate.id.clone(), assertions })
}

/// Assertions from whichever traces completed, calling `entry`; used for
/// single atoms where the composite rules do not apply.
pub fn unit_tests_from_completed(entry: &str, traces: &[ExecutionTrace]) -> Vec<String> {
    traces.iter().filter_map(|t| assertion_for(entry, t)).collect()
}


#[cfg(test)]
mod tests {
    use super::tracegen::{trace, S};
    use super::*;
    use crate::compose::{Chain, Provenance};
    use crate::value::{Value, ValueType};
    use proptest::prelude::*;

    fn int(i: i64) -> Value {
        Value::Int(i)
    }

    /// Ten traces of a two-stage chain: stage 1 = x + 1, stage 2 = 2x.
    fn clean(cid: &str) -> Vec<ExecutionTrace> {
        (0..10)
            .map(|i| trace(cid, i, int(i as i64), &[S::Out(int(i as i64 + 1)), S::Out(int(2 * i as i64 + 2))]))
            .collect()
    }

    fn rules(traces: &[ExecutionTrace]) -> BTreeSet<Rule> {
        check_validity(traces, IdentityRule::All).unwrap().violated_rules
    }

    #[test]
    fn clean_chain_accepted() {
        let v = check_validity(&clean("c"), IdentityRule::All).unwrap();
        assert!(v.accepted && v.violated_rules.is_empty());
    }

    #[test]
    fn raised_stage_is_r1() {
        let mut t = clean("c");
        t[3] = trace("c", 3, int(3), &[S::Out(int(4)), S::Raise]);
        assert!(rules(&t).contains(&Rule::RuntimeError));
        t[5] = trace("c", 5, int(5), &[S::Timeout]);
        assert!(rules(&t).contains(&Rule::RuntimeError));
    }

    #[test]
    fn null_on_set_four_is_r2() {
        let mut t = clean("c");
        t[4] = trace("c", 4, int(4), &[S::Null, S::Out(int(0))]);
        assert_eq!(rules(&t), [Rule::NoneOutput].into());
    }

    #[test]
    fn identity_needs_all_traces_by_default() {
        let mut t = clean("c");
        t[0] = trace("c", 0, int(0), &[S::Out(int(0)), S::Out(int(0))]);
        assert!(!rules(&t).contains(&Rule::IdentityStage));
        assert!(check_validity(&t, IdentityRule::Any).unwrap().violated_rules.contains(&Rule::IdentityStage));
        let all: Vec<_> = (0..10)
            .map(|i| trace("c", i, int(i as i64), &[S::Out(int(i as i64)), S::Out(int(3 * i as i64))]))
            .collect();
        assert_eq!(rules(&all), [Rule::IdentityStage].into());
    }

    #[test]
    fn constant_final_output_is_r4() {
        let t: Vec<_> =
            (0..10).map(|i| trace("c", i, int(i as i64), &[S::Out(int(i as i64 + 1)), S::Out(int(0))])).collect();
        assert_eq!(rules(&t), [Rule::ConstantOutput].into());
    }

    #[test]
    fn every_rule_reported() {
        let mut t: Vec<_> =
            (0..10).map(|i| trace("c", i, int(i as i64), &[S::Out(int(i as i64)), S::Out(int(7))])).collect();
        assert_eq!(rules(&t), [Rule::IdentityStage, Rule::ConstantOutput].into());
        t[9] = trace("c", 9, int(9), &[S::Raise]);
        t[8] = trace("c", 8, int(8), &[S::Null]);
        assert_eq!(rules(&t), [Rule::RuntimeError, Rule::NoneOutput].into());
    }

    #[test]
    fn incomplete_traces_rejected() {
        assert!(matches!(check_validity(&[], IdentityRule::All), Err(FilterError::IncompleteTraces(_))));
        let mut t = clean("c");
        t.remove(2);
        assert!(matches!(check_validity(&t, IdentityRule::All), Err(FilterError::IncompleteTraces(_))));
    }

    fn candidate(id: &str) -> SyntheticCandidate {
        SyntheticCandidate {
            id: id.into(),
            chain: Chain {
                atom_ids: vec!["a".into(), "b".into()],
                input_type: ValueType::Int,
                output_type: ValueType::Int,
                seed: 0,
            },
            prompt: String::new(),
            response: String::new(),
            provenance: Provenance { corpus_hash: String::new(), partition: "a".into(), seed: 0 },
        }
    }

    #[test]
    fn assertions_per_trace() {
        let tests = emit_unit_tests(&candidate("c"), &clean("c"), IdentityRule::All).unwrap();
        assert_eq!(tests.assertions.len(), 10);
        assert_eq!(tests.assertions[1], "assert solve(1) == 4");
        let one = trace("c", 0, Value::ListInt(vec![1, 2]), &[S::Out(int(3))]);
        assert_eq!(assertion_for("solve", &one).unwrap(), "assert solve([1, 2]) == 3");
        let mut bad = clean("c");
        bad[0] = trace("c", 0, int(0), &[S::Raise]);
        assert_eq!(
            emit_unit_tests(&candidate("c"), &bad, IdentityRule::All),
            Err(FilterError::NotAccepted("c".into()))
        );
    }

    fn stage_strategy() -> impl Strategy<Value = S> {
        prop_oneof![
            6 => (0i64..5).prop_map(|i| S::Out(Value::Int(i))),
            1 => Just(S::Null),
            1 => Just(S::Raise),
        ]
    }

    proptest! {
        #[test]
        fn adding_a_trace_never_removes_r1_or_r2(
            base in prop::collection::vec(prop::collection::vec(stage_strategy(), 1..4), 1..6),
            extra in prop::collection::vec(stage_strategy(), 1..4),
        ) {
            let traces: Vec<_> = base.iter().enumerate().map(|(i, s)| trace("c", i, Value::Int(i as i64), s)).collect();
            let before = rules(&traces);
            let mut more = traces.clone();
            more.push(trace("c", traces.len(), Value::Int(99), &extra));
            let after = rules(&more);
            for r in [Rule::RuntimeError, Rule::NoneOutput] {
                prop_assert!(!before.contains(&r) || after.contains(&r));
            }
        }
    }
}
