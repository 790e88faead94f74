//! pass@1 scoring of externally generated responses.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::dataset::DatasetRecord;
use crate::sandbox::{extract_code_block, run_unit_tests, ExecLimits, SandboxError, SandboxPool};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("response for unknown prompt id {0:?}")]
    UnresolvedPromptId(String),
    #[error("prompt id {0:?} has more than one response")]
    DuplicatePromptId(String),
    #[error("dataset has two records with id {0:?}")]
    DuplicateRecordId(String),
    #[error("record {0:?} carries no unit tests")]
    MissingTests(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub prompt_id: String,
    pub response: String,
}

/// Model outputs keyed by record id. `decode_meta` records how they were
/// produced, for example greedy decoding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseFile {
    pub entries: Vec<ResponseEntry>,
    pub decode_meta: Json,
}

impl ResponseFile {
    pub fn new(entries: Vec<ResponseEntry>) -> Self {
        ResponseFile { entries, decode_meta: Json::Null }
    }

    /// Reads one `{"prompt_id", "response"}` object per line. A line of the
    /// form `{"decode_meta": ...}` sets the metadata.
    pub fn load(path: impl AsRef<Path>) -> Result<ResponseFile, EvalError> {
        let path = path.as_ref();
        let io = |source| EvalError::Io { path: path.into(), source };
        let mut out = ResponseFile::default();
        for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |msg: String| EvalError::Parse { path: path.into(), line: i + 1, msg };
            let v: Json = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            match v.get("decode_meta") {
                Some(meta) if v.as_object().is_some_and(|o| o.len() == 1) => out.decode_meta = meta.clone(),
                _ => out.entries.push(serde_json::from_value(v).map_err(|e| parse(e.to_string()))?),
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut text = String::new();
        if !self.decode_meta.is_null() {
            text.push_str(&serde_json::json!({ "decode_meta": self.decode_meta }).to_string());
            text.push('\n');
        }
        for e in &self.entries {
            text.push_str(&serde_json::to_string(e).expect("entry serializes"));
            text.push('\n');
        }
        std::fs::write(path, text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptResult {
    pub id: String,
    pub reward: u8,
    pub tests_passed: usize,
    pub tests_total: usize,
    pub failure_detail: Option<String>,
    /// No response was supplied; scored 0.
    pub missing_response: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n_prompts: usize,
    pub n_passed: usize,
    pub pass_at_1: f64,
    pub per_prompt: Vec<PromptResult>,
    pub wall_time_ms: u64,
}

/// Judges each record's response against the record's unit tests.
/// Per-prompt results are ordered by id.
pub fn evaluate(
    dataset: &str,
    records: &[DatasetRecord],
    responses: &ResponseFile,
    limits: &ExecLimits,
    pool: &SandboxPool,
) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    limits.validate()?;
    let mut by_id: HashMap<&str, &DatasetRecord> = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.insert(r.meta.id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateRecordId(r.meta.id.clone()));
        }
        if r.unit_tests.as_ref().is_none_or(Vec::is_empty) {
            return Err(EvalError::MissingTests(r.meta.id.clone()));
        }
    }
    let mut answered: HashMap<&str, &str> = HashMap::with_capacity(responses.entries.len());
    for e in &responses.entries {
        if !by_id.contains_key(e.prompt_id.as_str()) {
            return Err(EvalError::UnresolvedPromptId(e.prompt_id.clone()));
        }
        if answered.insert(e.prompt_id.as_str(), e.response.as_str()).is_some() {
            return Err(EvalError::DuplicatePromptId(e.prompt_id.clone()));
        }
    }

    let mut ids: Vec<&str> = by_id.keys().copied().collect();
    ids.sort_unstable();
    let judged = pool.map(&ids, |sb, id| {
        let record = by_id[id];
        let tests = record.unit_tests.as_deref().unwrap_or_default();
        let Some(response) = answered.get(id) else {
            return Ok(PromptResult {
                id: id.to_string(),
                reward: 0,
                tests_passed: 0,
                tests_total: tests.len(),
                failure_detail: Some("no response".into()),
                missing_response: true,
            });
        };
        let code = extract_code_block(response);
        match run_unit_tests(sb, &code, tests, limits) {
            Ok(r) => Ok(PromptResult {
                id: id.to_string(),
                reward: r.reward,
                tests_passed: r.tests_passed,
                tests_total: r.tests_total,
                failure_detail: r.failure_detail,
                missing_response: false,
            }),
            Err(e @ (SandboxError::Unavailable(..) | SandboxError::SpawnFailure(_))) => Err(e),
            Err(e) => Ok(PromptResult {
                id: id.to_string(),
                reward: 0,
                tests_passed: 0,
                tests_total: tests.len(),
                failure_detail: Some(e.to_string()),
                missing_response: false,
            }),
        }
    });
    let per_prompt = judged.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n_prompts = per_prompt.len();
    let n_passed = per_prompt.iter().filter(|p| p.reward == 1).count();
    Ok(EvalReport {
        dataset: dataset.into(),
        n_prompts,
        n_passed,
        pass_at_1: if n_prompts == 0 { 0.0 } else { n_passed as f64 / n_prompts as f64 },
        per_prompt,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}

/// Text table of dataset against pass@1, one row per report in input
/// order. Repeated labels get a ` (run i)` suffix.
pub fn summarize(reports: &[EvalReport]) -> String {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let repeated: HashSet<&str> = {
        let mut once = HashSet::new();
        reports.iter().filter(|r| !once.insert(r.dataset.as_str())).map(|r| r.dataset.as_str()).collect()
    };
    let header = ["dataset", "prompts", "passed", "pass@1"].map(String::from);
    let mut rows = vec![header];
    for r in reports {
        let label = if repeated.contains(r.dataset.as_str()) {
            let n = seen.entry(&r.dataset).or_default();
            *n += 1;
            format!("{} (run {n})", r.dataset)
        } else {
            r.dataset.clone()
        };
        rows.push([label, r.n_prompts.to_string(), r.n_passed.to_string(), format!("{:.3}", r.pass_at_1)]);
    }
    let widths: Vec<usize> = (0..4).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RecordMeta;
    use crate::sandbox::test_sandbox;

    fn record(id: &str, k: i64) -> DatasetRecord {
        let tests = (0..3).map(|x| format!("assert solve({x}) == {}", x + k)).collect();
        DatasetRecord::rl(
            format!("add {k}"),
            tests,
            RecordMeta { id: id.into(), dataset: "d".into(), atoms: vec![], length: 1, seed: 0 },
        )
    }

    fn answer(id: &str, k: i64) -> ResponseEntry {
        ResponseEntry { prompt_id: id.into(), response: format!("```python\ndef solve(x):\n    return x + {k}\n```") }
    }

    fn pool() -> SandboxPool {
        SandboxPool::new(test_sandbox(), 0)
    }

    #[test]
    fn scores_correct_wrong_and_missing() {
        let records = vec![record("a", 1), record("b", 2), record("c", 3)];
        let responses = ResponseFile::new(vec![answer("b", 2), answer("a", 5)]);
        let rep = evaluate("d", &records, &responses, &ExecLimits::default(), &pool()).unwrap();
        let rewards: Vec<_> = rep.per_prompt.iter().map(|p| (p.id.as_str(), p.reward, p.missing_response)).collect();
        assert_eq!(rewards, vec![("a", 0, false), ("b", 1, false), ("c", 0, true)]);
        assert_eq!((rep.n_prompts, rep.n_passed), (3, 1));
        assert!((rep.pass_at_1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_and_duplicate_ids_are_errors() {
        let records = vec![record("a", 1)];
        let unknown = ResponseFile::new(vec![answer("zz", 1)]);
        assert!(
            matches!(evaluate("d", &records, &unknown, &ExecLimits::default(), &pool()), Err(EvalError::UnresolvedPromptId(id)) if id == "zz")
        );
        let dup = ResponseFile::new(vec![answer("a", 1), answer("a", 1)]);
        assert!(matches!(
            evaluate("d", &records, &dup, &ExecLimits::default(), &pool()),
            Err(EvalError::DuplicatePromptId(_))
        ));
    }

    #[test]
    fn response_order_does_not_matter() {
        let records: Vec<_> = (0..6).map(|i| record(&format!("r{i}"), i)).collect();
        let entries: Vec<_> = (0..6).map(|i| answer(&format!("r{i}"), if i % 2 == 0 { i } else { 0 })).collect();
        let mut reversed = entries.clone();
        reversed.reverse();
        let a = evaluate("d", &records, &ResponseFile::new(entries), &ExecLimits::default(), &pool()).unwrap();
        let b = evaluate("d", &records, &ResponseFile::new(reversed), &ExecLimits::default(), &pool()).unwrap();
        assert_eq!(a.per_prompt, b.per_prompt);
        assert_eq!(a.pass_at_1, 0.5);
    }

    #[test]
    fn response_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut f = ResponseFile::new(vec![answer("a", 1), answer("b", 2)]);
        f.decode_meta = serde_json::json!({"strategy": "greedy"});
        f.save(&path).unwrap();
        assert_eq!(ResponseFile::load(&path).unwrap(), f);
    }

    fn report(label: &str, n: usize, passed: usize) -> EvalReport {
        EvalReport {
            dataset: label.into(),
            n_prompts: n,
            n_passed: passed,
            pass_at_1: passed as f64 / n as f64,
            per_prompt: vec![],
            wall_time_ms: 0,
        }
    }

    #[test]
    fn summary_tables() {
        let empty = summarize(&[]);
        assert_eq!(empty.lines().count(), 2);
        assert!(empty.starts_with("dataset"));
        let one = summarize(&[report("mbpp", 4, 1)]);
        assert_eq!(one.lines().count(), 3);
        assert!(one.lines().nth(2).unwrap().ends_with("0.250"));
        let two = summarize(&[report("x", 2, 2), report("y", 2, 0), report("x", 2, 1)]);
        let labels: Vec<_> = two.lines().skip(2).map(|l| l.split("  ").next().unwrap().trim().to_string()).collect();
        assert_eq!(labels, vec!["x (run 1)", "y", "x (run 2)"]);
    }
}
