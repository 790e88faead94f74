//! Atomic-function corpus: loading, saving, indexing by input type and the
//! seeded three-way partition used to build disjoint composite datasets.
//!
//! On disk a corpus is a manifest (`corpus.toml`) listing one TOML file per
//! atom:
//!
//! ```toml
//! # corpus.toml
//! topics = ["math", "sorting"]          # optional taxonomy override
//! atoms = ["atoms/int_digit_sum.toml"]
//!
//! # atoms/int_digit_sum.toml
//! id = "int_digit_sum"
//! topic = "math"
//! prompt = "Write a function digit_sum(n) ..."
//! fn_name = "digit_sum"
//! input_type = "Int"
//! output_type = "Int"
//! code = '''
//! def digit_sum(n):
//!     return sum(int(c) for c in str(n))
//! '''
//! ```
//!
//! A directory without a manifest is read as every `*.toml` file in it, in
//! file-name order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::value::ValueType;

pub const MANIFEST_FILE: &str = "corpus.toml";

pub const DEFAULT_TOPICS: [&str; 10] = [
    "math",
    "number_theory",
    "sorting",
    "searching",
    "string_operation",
    "list_operation",
    "counting",
    "filtering",
    "aggregation",
    "encoding",
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{entry}: missing field `{field}`")]
    MissingField { entry: String, field: &'static str },
    #[error("{entry}: duplicate atom id {id:?}")]
    DuplicateId { entry: String, id: String },
    #[error("{entry}: function name {fn_name:?} already defined by atom {other:?}")]
    DuplicateFnName { entry: String, fn_name: String, other: String },
    #[error("{entry}: unknown value type {tag:?}")]
    UnknownValueType { entry: String, tag: String },
    #[error("{entry}: unparseable code: {reason}")]
    UnparseableCode { entry: String, reason: String },
    #[error("{entry}: invalid atom id {id:?} (allowed: letters, digits, '_', '-', '.')")]
    InvalidId { entry: String, id: String },
    #[error("{entry}: {source}")]
    Toml { entry: String, source: toml::de::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("partition sizes {sizes:?} sum to {sum}, corpus has {len} atoms")]
    SizesDontSum { sizes: [usize; 3], sum: usize, len: usize },
    #[error("unknown atom id {0:?}")]
    UnknownAtom(String),
}

/// One handwritten, typed building block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicFunction {
    pub id: String,
    pub topic: String,
    pub prompt: String,
    pub fn_name: String,
    pub input_type: ValueType,
    pub output_type: ValueType,
    pub code: String,
}

impl AtomicFunction {
    /// Checks the static invariants that do not need an interpreter.
    pub fn check(&self, entry: &str) -> Result<(), CorpusError> {
        let id_ok =
            !self.id.is_empty() && self.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
        if !id_ok {
            return Err(CorpusError::InvalidId { entry: entry.into(), id: self.id.clone() });
        }
        let unparseable = |reason: String| CorpusError::UnparseableCode { entry: entry.into(), reason };
        let ident = Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").expect("static regex");
        if !ident.is_match(&self.fn_name) {
            return Err(unparseable(format!("{:?} is not an identifier", self.fn_name)));
        }
        if self.fn_name == "solve" {
            return Err(unparseable("`solve` is reserved for composed functions".into()));
        }
        let def = Regex::new(&format!(r"(?m)^def\s+{}\s*\(", regex::escape(&self.fn_name))).expect("escaped regex");
        if !def.is_match(&self.code) {
            return Err(unparseable(format!("no top-level `def {}(`", self.fn_name)));
        }
        Ok(())
    }
}

/// Warnings that do not prevent loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusWarning {
    UnknownTopic { id: String, topic: String },
}

/// An immutable, indexed collection of atoms.
#[derive(Debug, Clone, Default)]
pub struct AtomCorpus {
    atoms: Vec<AtomicFunction>,
    by_id: HashMap<String, usize>,
    by_input_type: BTreeMap<ValueType, Vec<usize>>,
    topics: Vec<String>,
    warnings: Vec<CorpusWarning>,
}

impl AtomCorpus {
    pub fn new(atoms: Vec<AtomicFunction>) -> Result<Self, CorpusError> {
        Self::with_topics(atoms, DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect())
    }

    pub fn with_topics(atoms: Vec<AtomicFunction>, topics: Vec<String>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::new();
        let mut fn_names: HashMap<&str, &str> = HashMap::new();
        let mut by_input_type: BTreeMap<ValueType, Vec<usize>> =
            ValueType::ALL.iter().map(|t| (*t, Vec::new())).collect();
        let mut warnings = Vec::new();
        for (i, atom) in atoms.iter().enumerate() {
            atom.check(&atom.id)?;
            if by_id.insert(atom.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { entry: atom.id.clone(), id: atom.id.clone() });
            }
            if let Some(other) = fn_names.insert(&atom.fn_name, &atom.id) {
                return Err(CorpusError::DuplicateFnName {
                    entry: atom.id.clone(),
                    fn_name: atom.fn_name.clone(),
                    other: other.to_string(),
                });
            }
            by_input_type.entry(atom.input_type).or_default().push(i);
            if !topics.iter().any(|t| t == &atom.topic) {
                tracing::warn!(atom = %atom.id, topic = %atom.topic, "topic not in taxonomy");
                warnings.push(CorpusWarning::UnknownTopic { id: atom.id.clone(), topic: atom.topic.clone() });
            }
        }
        Ok(AtomCorpus { atoms, by_id, by_input_type, topics, warnings })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[AtomicFunction] {
        &self.atoms
    }

    pub fn get(&self, id: &str) -> Option<&AtomicFunction> {
        self.by_id.get(id).map(|&i| &self.atoms[i])
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn warnings(&self) -> &[CorpusWarning] {
        &self.warnings
    }

    /// Atoms whose input type is `t`, in corpus order.
    pub fn atoms_with_input_type(&self, t: ValueType) -> Vec<&AtomicFunction> {
        self.by_input_type.get(&t).map(|ix| ix.iter().map(|&i| &self.atoms[i]).collect()).unwrap_or_default()
    }

    /// Ids indexed under input type `t`.
    pub fn ids_with_input_type(&self, t: ValueType) -> Vec<&str> {
        self.atoms_with_input_type(t).into_iter().map(|a| a.id.as_str()).collect()
    }

    /// A corpus restricted to `ids`, keeping corpus order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<AtomCorpus, CorpusError> {
        let wanted: HashSet<&str> = ids.iter().map(AsRef::as_ref).collect();
        for id in &wanted {
            if !self.by_id.contains_key(*id) {
                return Err(CorpusError::UnknownAtom(id.to_string()));
            }
        }
        let atoms = self.atoms.iter().filter(|a| wanted.contains(a.id.as_str())).cloned().collect();
        AtomCorpus::with_topics(atoms, self.topics.clone())
    }

    /// Content fingerprint over every atom field, as 16 hex digits.
    pub fn content_hash(&self) -> String {
        let mut h = 0u64;
        for a in &self.atoms {
            for field in [&a.id, &a.topic, &a.prompt, &a.fn_name, &a.code] {
                h = crate::seed::split(h, crate::seed::fnv1a64(field.as_bytes()));
            }
            h = crate::seed::split(h, crate::seed::fnv1a64(a.input_type.tag().as_bytes()));
            h = crate::seed::split(h, crate::seed::fnv1a64(a.output_type.tag().as_bytes()));
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Serialize, Deserialize, Default)]
struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topics: Option<Vec<String>>,
    atoms: Vec<String>,
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })
}

fn str_field(table: &toml::Table, entry: &str, field: &'static str) -> Result<String, CorpusError> {
    table
        .get(field)
        .and_then(toml::Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| CorpusError::MissingField { entry: entry.into(), field })
}

fn type_field(table: &toml::Table, entry: &str, field: &'static str) -> Result<ValueType, CorpusError> {
    let tag = str_field(table, entry, field)?;
    tag.parse().map_err(|_| CorpusError::UnknownValueType { entry: entry.into(), tag })
}

/// Parses one atom file's text. `entry` names the source in errors.
pub fn parse_atom(text: &str, entry: &str) -> Result<AtomicFunction, CorpusError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|source| CorpusError::Toml { entry: entry.into(), source })?;
    let atom = AtomicFunction {
        id: str_field(&table, entry, "id")?,
        topic: str_field(&table, entry, "topic")?,
        prompt: str_field(&table, entry, "prompt")?,
        fn_name: str_field(&table, entry, "fn_name")?,
        input_type: type_field(&table, entry, "input_type")?,
        output_type: type_field(&table, entry, "output_type")?,
        code: str_field(&table, entry, "code")?,
    };
    atom.check(entry)?;
    Ok(atom)
}

/// Loads a corpus from a manifest file, a directory holding a manifest, or
/// a directory of atom files.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<AtomCorpus, CorpusError> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };

    let (files, topics) = if manifest_path.is_file() {
        let text = read_text(&manifest_path)?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|source| CorpusError::Toml { entry: manifest_path.display().to_string(), source })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let files: Vec<PathBuf> = manifest.atoms.iter().map(|p| base.join(p)).collect();
        (files, manifest.topics)
    } else if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|source| CorpusError::Io { path: path.into(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        (files, None)
    } else {
        return Err(CorpusError::Io {
            path: path.into(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no corpus here"),
        });
    };

    let mut atoms = Vec::with_capacity(files.len());
    let mut seen: HashMap<String, String> = HashMap::new();
    for file in &files {
        let entry = file.display().to_string();
        let atom = parse_atom(&read_text(file)?, &entry)?;
        if seen.insert(atom.id.clone(), entry.clone()).is_some() {
            return Err(CorpusError::DuplicateId { entry, id: atom.id });
        }
        atoms.push(atom);
    }
    let topics = topics.unwrap_or_else(|| DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect());
    AtomCorpus::with_topics(atoms, topics)
}

/// Writes `corpus` as a manifest plus `atoms/<id>.toml` under `dir`.
pub fn save_corpus(corpus: &AtomCorpus, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    let atoms_dir = dir.join("atoms");
    fs::create_dir_all(&atoms_dir).map_err(|source| CorpusError::Io { path: atoms_dir.clone(), source })?;
    let mut manifest = Manifest { topics: Some(corpus.topics.clone()), atoms: Vec::with_capacity(corpus.len()) };
    for atom in corpus.atoms() {
        let rel = format!("atoms/{}.toml", atom.id);
        let text = toml::to_string(atom).expect("atom serializes");
        let path = dir.join(&rel);
        fs::write(&path, text).map_err(|source| CorpusError::Io { path, source })?;
        manifest.atoms.push(rel);
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, toml::to_string(&manifest).expect("manifest serializes"))
        .map_err(|source| CorpusError::Io { path, source })
}

/// Which of the three disjoint sets an atom landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetLabel {
    A,
    B,
    C,
}

impl SetLabel {
    pub const ALL: [SetLabel; 3] = [SetLabel::A, SetLabel::B, SetLabel::C];

    pub fn dataset_name(self) -> &'static str {
        match self {
            SetLabel::A => "composite_a",
            SetLabel::B => "composite_b",
            SetLabel::C => "composite_c",
        }
    }
}

/// Three pairwise-disjoint id sets covering the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPartition {
    pub set_a: Vec<String>,
    pub set_b: Vec<String>,
    pub set_c: Vec<String>,
    pub seed: u64,
}

impl CorpusPartition {
    pub fn set(&self, label: SetLabel) -> &[String] {
        match label {
            SetLabel::A => &self.set_a,
            SetLabel::B => &self.set_b,
            SetLabel::C => &self.set_c,
        }
    }

    pub fn label_of(&self, id: &str) -> Option<SetLabel> {
        SetLabel::ALL.into_iter().find(|l| self.set(*l).iter().any(|x| x == id))
    }

    /// Verifies disjointness and coverage against `corpus`.
    pub fn check(&self, corpus: &AtomCorpus) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for id in self.set_a.iter().chain(&self.set_b).chain(&self.set_c) {
            if corpus.get(id).is_none() {
                return Err(CorpusError::UnknownAtom(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::DuplicateId { entry: "partition".into(), id: id.clone() });
            }
        }
        if seen.len() != corpus.len() {
            let sizes = [self.set_a.len(), self.set_b.len(), self.set_c.len()];
            return Err(CorpusError::SizesDontSum { sizes, sum: seen.len(), len: corpus.len() });
        }
        Ok(())
    }
}

/// Shuffles the corpus ids with a generator seeded by `seed` and cuts the
/// shuffled order into consecutive runs of the requested sizes. Each set is
/// reported in corpus order.
pub fn partition_corpus(corpus: &AtomCorpus, sizes: [usize; 3], seed: u64) -> Result<CorpusPartition, CorpusError> {
    let sum: usize = sizes.iter().sum();
    if sum != corpus.len() {
        return Err(CorpusError::SizesDontSum { sizes, sum, len: corpus.len() });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut crate::seed::rng(seed));
    let mut sets: [Vec<usize>; 3] = Default::default();
    let mut start = 0;
    for (set, size) in sets.iter_mut().zip(sizes) {
        *set = order[start..start + size].to_vec();
        set.sort_unstable();
        start += size;
    }
    let ids = |ix: &[usize]| ix.iter().map(|&i| corpus.atoms[i].id.clone()).collect();
    Ok(CorpusPartition { set_a: ids(&sets[0]), set_b: ids(&sets[1]), set_c: ids(&sets[2]), seed })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn atom(id: &str, input: ValueType, output: ValueType) -> AtomicFunction {
        AtomicFunction {
            id: id.into(),
            topic: "math".into(),
            prompt: format!("Prompt for {id}."),
            fn_name: id.into(),
            input_type: input,
            output_type: output,
            code: format!("def {id}(x):\n    return x\n"),
        }
    }
}
