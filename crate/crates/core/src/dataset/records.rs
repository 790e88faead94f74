//! Record types and the JSON-lines record file format.
//!
//! One JSON object per line, fields in this order:
//!
//! ```text
//! {"kind":"sft","prompt":"...","response":"...","meta":{...}}
//! {"kind":"rl","prompt":"...","unit_tests":["assert ..."],"meta":{...}}
//! ```
//!
//! `meta` is `{"id","dataset","atoms","length","seed"}`. An empty record list
//! is an empty file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dedup::{canonical_key, DedupText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Sft,
    Rl,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordMeta {
    /// Stable identifier, also the prompt id used by response files.
    pub id: String,
    pub dataset: String,
    pub atoms: Vec<String>,
    pub length: usize,
    pub seed: u64,
}

/// A training record: `<prompt, response>` for SFT, `<prompt, unit_tests>`
/// for RL.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub kind: RecordKind,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_tests: Option<Vec<String>>,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    pub fn sft(prompt: String, response: String, meta: RecordMeta) -> Self {
        DatasetRecord { kind: RecordKind::Sft, prompt, response: Some(response), unit_tests: None, meta }
    }

    pub fn rl(prompt: String, unit_tests: Vec<String>, meta: RecordMeta) -> Self {
        DatasetRecord { kind: RecordKind::Rl, prompt, response: None, unit_tests: Some(unit_tests), meta }
    }

    /// Checks the kind/field invariant.
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            RecordKind::Sft => {
                if self.response.as_deref().is_none_or(str::is_empty) {
                    return Err("sft record needs a non-empty response".into());
                }
                if self.unit_tests.is_some() {
                    return Err("sft record must not carry unit_tests".into());
                }
            }
            RecordKind::Rl => {
                if self.unit_tests.as_ref().is_none_or(Vec::is_empty) {
                    return Err("rl record needs non-empty unit_tests".into());
                }
                if self.response.is_some() {
                    return Err("rl record must not carry a response".into());
                }
            }
        }
        Ok(())
    }
}

impl DedupText for DatasetRecord {
    fn dedup_text(&self) -> String {
        let body = match (&self.response, &self.unit_tests) {
            (Some(r), _) => r.clone(),
            (None, Some(t)) => t.join("\n"),
            (None, None) => String::new(),
        };
        canonical_key(&self.prompt, &body)
    }
}

/// A validated synthetic sample: an SFT pair that also carries the unit
/// tests built from its traces. Converts to either record kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub prompt: String,
    pub response: String,
    pub unit_tests: Vec<String>,
    pub meta: RecordMeta,
}

impl DedupText for Sample {
    fn dedup_text(&self) -> String {
        canonical_key(&self.prompt, &self.response)
    }
}

impl Sample {
    pub fn to_sft(&self) -> DatasetRecord {
        DatasetRecord::sft(self.prompt.clone(), self.response.clone(), self.meta.clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    SchemaViolation { path: PathBuf, line: usize, msg: String },
    #[error("record {0} has no unit tests")]
    MissingTests(String),
}

/// Types storable one-per-line.
pub trait LineRecord: Serialize + DeserializeOwned {
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl LineRecord for DatasetRecord {
    fn check(&self) -> Result<(), String> {
        self.validate()
    }
}

impl LineRecord for Sample {}

pub fn emit_records<T: LineRecord>(records: &[T], path: impl AsRef<Path>) -> Result<(), RecordError> {
    let path = path.as_ref();
    let io = |source| RecordError::Io { path: path.into(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_records<T: LineRecord>(path: impl AsRef<Path>) -> Result<Vec<T>, RecordError> {
    let path = path.as_ref();
    let io = |source| RecordError::Io { path: path.into(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let violation = |msg: String| RecordError::SchemaViolation { path: path.into(), line: i + 1, msg };
        let rec: T = serde_json::from_str(&line).map_err(|e| violation(e.to_string()))?;
        rec.check().map_err(violation)?;
        out.push(rec);
    }
    Ok(out)
}

/// Drops responses and attaches unit tests.
pub fn to_rl_records(samples: &[Sample]) -> Result<Vec<DatasetRecord>, RecordError> {
    samples
        .iter()
        .map(|s| {
            if s.unit_tests.is_empty() {
                return Err(RecordError::MissingTests(s.meta.id.clone()));
            }
            Ok(DatasetRecord::rl(s.prompt.clone(), s.unit_tests.clone(), s.meta.clone()))
        })
        .collect()
}

pub fn to_sft_records(samples: &[Sample]) -> Vec<DatasetRecord> {
    samples.iter().map(Sample::to_sft).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(id: &str) -> RecordMeta {
        RecordMeta {
            id: id.into(),
            dataset: "composite_a".into(),
            atoms: vec!["a".into(), "b".into()],
            length: 2,
            seed: 9,
        }
    }

    fn sample(id: &str, tests: usize) -> Sample {
        Sample {
            prompt: format!("prompt {id}"),
            response: "def solve(x):\n    return x\n".into(),
            unit_tests: (0..tests).map(|i| format!("assert solve({i}) == {i}")).collect(),
            meta: meta(id),
        }
    }

    #[test]
    fn field_order_is_stable() {
        let line = serde_json::to_string(&sample("x", 1).to_sft()).unwrap();
        assert!(line.starts_with(r#"{"kind":"sft","prompt":"prompt x","response":"#), "{line}");
        let rl = to_rl_records(&[sample("x", 1)]).unwrap();
        let line = serde_json::to_string(&rl[0]).unwrap();
        assert!(line.starts_with(r#"{"kind":"rl","prompt":"prompt x","unit_tests":["#), "{line}");
    }

    #[test]
    fn rl_conversion_preserves_prompts() {
        let samples: Vec<_> = (0..1000).map(|i| sample(&format!("s{i}"), 3)).collect();
        let rl = to_rl_records(&samples).unwrap();
        assert_eq!(rl.len(), 1000);
        assert!(rl
            .iter()
            .zip(&samples)
            .all(|(r, s)| r.prompt == s.prompt && r.response.is_none() && r.kind == RecordKind::Rl));
        let missing = [sample("a", 2), sample("b", 0)];
        assert!(matches!(to_rl_records(&missing), Err(RecordError::MissingTests(id)) if id == "b"));
    }

    #[test]
    fn schema_violation_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let good = serde_json::to_string(&sample("a", 1).to_sft()).unwrap();
        let bad = good.replace(r#""prompt":"prompt a","#, "");
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match load_records::<DatasetRecord>(&path) {
            Err(RecordError::SchemaViolation { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("prompt"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let mixed = good.replace(r#""kind":"sft""#, r#""kind":"rl""#);
        std::fs::write(&path, format!("{mixed}\n")).unwrap();
        assert!(matches!(load_records::<DatasetRecord>(&path), Err(RecordError::SchemaViolation { line: 1, .. })));
    }

    #[test]
    fn empty_list_is_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        emit_records::<DatasetRecord>(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
        assert!(load_records::<DatasetRecord>(&path).unwrap().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn emit_load_round_trip(prompts in prop::collection::vec(any::<String>(), 0..30), rl in any::<bool>()) {
            let samples: Vec<_> = prompts.iter().enumerate().map(|(i, p)| Sample { prompt: p.clone(), ..sample(&i.to_string(), 2) }).collect();
            let records = if rl { to_rl_records(&samples).unwrap() } else { to_sft_records(&samples) };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.jsonl");
            emit_records(&records, &path).unwrap();
            let back: Vec<DatasetRecord> = load_records(&path).unwrap();
            prop_assert_eq!(back, records);
        }
    }
}
