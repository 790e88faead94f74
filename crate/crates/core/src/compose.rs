//! Type-directed chain sampling and assembly of synthetic `solve` functions.
//!
//! A chain starts from an atom drawn uniformly from the corpus; every later
//! atom is drawn uniformly from the atoms whose input type equals the
//! previous output type, excluding the previous atom itself. A chain that
//! runs into a type with no successor is restarted from scratch.

use std::collections::{BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{AtomCorpus, AtomicFunction};
use crate::seed::{self, Rng};
use crate::value::ValueType;

/// Restarts allowed per chain before giving up.
pub const DEFAULT_RETRY_BUDGET: usize = 50;

/// Name of the composed entry function.
pub const ENTRY_NAME: &str = "solve";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no type-compatible successor after {restarts} restarts")]
    DeadEnd { restarts: usize },
    #[error("unknown atom id {0:?}")]
    UnknownAtomId(String),
    #[error("template set has no `{0}` entry")]
    MissingTemplate(&'static str),
    #[error("chain length {0} is below the minimum of 2")]
    ChainTooShort(usize),
    #[error("retry budget exhausted after producing {produced} candidates")]
    ExhaustedRetries { produced: usize },
    #[error("allowed length set is empty")]
    NoLengths,
    #[error("{from} -> {to} is not type-compatible")]
    Incompatible { from: String, to: String },
}

/// An ordered, type-compatible sequence of atom ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub atom_ids: Vec<String>,
    pub input_type: ValueType,
    pub output_type: ValueType,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.atom_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atom_ids.is_empty()
    }

    /// Builds a chain from explicit ids, checking type compatibility.
    pub fn from_ids<S: AsRef<str>>(corpus: &AtomCorpus, ids: &[S], seed: u64) -> Result<Chain, ComposeError> {
        let atoms = resolve(corpus, ids)?;
        let (first, last) = match (atoms.first(), atoms.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(ComposeError::ChainTooShort(0)),
        };
        if let Some(w) = atoms.windows(2).find(|w| w[0].output_type != w[1].input_type) {
            return Err(ComposeError::Incompatible { from: w[0].id.clone(), to: w[1].id.clone() });
        }
        Ok(Chain {
            atom_ids: atoms.iter().map(|a| a.id.clone()).collect(),
            input_type: first.input_type,
            output_type: last.output_type,
            seed,
        })
    }

    /// True when every consecutive pair is type-compatible against `corpus`.
    pub fn is_type_sound(&self, corpus: &AtomCorpus) -> bool {
        resolve(corpus, &self.atom_ids)
            .map(|atoms| atoms.windows(2).all(|w| w[0].output_type == w[1].input_type))
            .unwrap_or(false)
    }
}

fn resolve<'c, S: AsRef<str>>(corpus: &'c AtomCorpus, ids: &[S]) -> Result<Vec<&'c AtomicFunction>, ComposeError> {
    ids.iter()
        .map(|id| corpus.get(id.as_ref()).ok_or_else(|| ComposeError::UnknownAtomId(id.as_ref().into())))
        .collect()
}

/// Samples one chain of exactly `length` atoms.
pub fn sample_chain(
    corpus: &AtomCorpus,
    length: usize,
    rng: &mut Rng,
    retry_budget: usize,
) -> Result<Vec<String>, ComposeError> {
    if corpus.is_empty() {
        return Err(ComposeError::EmptyCorpus);
    }
    if length < 2 {
        return Err(ComposeError::ChainTooShort(length));
    }
    'restart: for _ in 0..=retry_budget {
        let mut chain: Vec<&AtomicFunction> = Vec::with_capacity(length);
        chain.push(corpus.atoms().choose(rng).expect("non-empty"));
        while chain.len() < length {
            let prev = chain[chain.len() - 1];
            let pool: Vec<&AtomicFunction> =
                corpus.atoms_with_input_type(prev.output_type).into_iter().filter(|a| a.id != prev.id).collect();
            match pool.choose(rng) {
                Some(next) => chain.push(next),
                None => continue 'restart,
            }
        }
        return Ok(chain.into_iter().map(|a| a.id.clone()).collect());
    }
    Err(ComposeError::DeadEnd { restarts: retry_budget })
}

/// Source text of the chain: each atom definition once, in first-use order,
/// followed by `solve(x)` threading `v1, v2, ...` through the stages.
pub fn assemble_response(chain: &Chain, corpus: &AtomCorpus) -> Result<String, ComposeError> {
    let atoms = resolve(corpus, &chain.atom_ids)?;
    let mut out = String::new();
    let mut emitted = HashSet::new();
    for atom in &atoms {
        if emitted.insert(atom.id.as_str()) {
            out.push_str(atom.code.trim_end());
            out.push_str("\n\n\n");
        }
    }
    out.push_str(&format!("def {ENTRY_NAME}(x):\n"));
    let mut arg = "x".to_string();
    for (i, atom) in atoms.iter().enumerate() {
        let var = format!("v{}", i + 1);
        out.push_str(&format!("    {var} = {}({arg})\n", atom.fn_name));
        arg = var;
    }
    out.push_str(&format!("    return {arg}\n"));
    Ok(out)
}

/// Connective templates used to join atom prompts. `first`, `middle` and
/// `last` must contain `{prompt}`; `{n}` expands to the 1-based step number
/// and `{input_type}` / `{output_type}` to the chain's type tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    #[serde(default)]
    pub header: String,
    pub first: Option<String>,
    pub middle: Option<String>,
    pub last: Option<String>,
    #[serde(default)]
    pub footer: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            header: "Write a Python function solve(x) that takes an input of type {input_type} \
                     and applies the following steps in order, each step working on the result \
                     of the previous one.\n"
                .into(),
            first: Some("Step {n}: {prompt}".into()),
            middle: Some("\nThen, step {n}: {prompt}".into()),
            last: Some("\nFinally, step {n}: {prompt}".into()),
            footer: "\nsolve(x) must return the {output_type} produced by the last step.".into(),
        }
    }
}

impl TemplateSet {
    pub fn from_toml(text: &str) -> Result<TemplateSet, toml::de::Error> {
        toml::from_str(text)
    }
}

fn expand(template: &str, n: usize, prompt: &str, chain: &Chain) -> String {
    // {prompt} last so atom text containing braces is never re-expanded.
    template
        .replace("{n}", &n.to_string())
        .replace("{input_type}", chain.input_type.tag())
        .replace("{output_type}", chain.output_type.tag())
        .replace("{prompt}", prompt)
}

/// Joins the atom prompts of `chain` with the connectives of `templates`.
pub fn assemble_prompt(chain: &Chain, corpus: &AtomCorpus, templates: &TemplateSet) -> Result<String, ComposeError> {
    let atoms = resolve(corpus, &chain.atom_ids)?;
    if atoms.len() == 1 {
        return Ok(atoms[0].prompt.clone());
    }
    let first = templates.first.as_deref().ok_or(ComposeError::MissingTemplate("first"))?;
    let middle = templates.middle.as_deref().ok_or(ComposeError::MissingTemplate("middle"))?;
    let last = templates.last.as_deref().ok_or(ComposeError::MissingTemplate("last"))?;
    let mut out = expand(&templates.header, 0, "", chain);
    for (i, atom) in atoms.iter().enumerate() {
        let t = match i {
            0 => first,
            i if i + 1 == atoms.len() => last,
            _ => middle,
        };
        out.push_str(&expand(t, i + 1, atom.prompt.trim_end(), chain));
    }
    out.push_str(&expand(&templates.footer, 0, "", chain));
    Ok(out)
}

/// Where a candidate came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_hash: String,
    pub partition: String,
    pub seed: u64,
}

/// An assembled but not yet validated synthetic function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCandidate {
    pub id: String,
    pub chain: Chain,
    pub prompt: String,
    pub response: String,
    pub provenance: Provenance,
}

impl crate::dedup::DedupText for SyntheticCandidate {
    fn dedup_text(&self) -> String {
        crate::dedup::canonical_key(&self.prompt, &self.response)
    }
}

/// Composer settings shared by every candidate of a stream.
#[derive(Debug, Clone)]
pub struct ComposeConfig {
    pub lengths: BTreeSet<usize>,
    pub retry_budget: usize,
    pub templates: TemplateSet,
    /// Label recorded in provenance and candidate ids.
    pub partition: String,
}

impl Default for ComposeConfig {
    fn default() -> Self {
        ComposeConfig {
            lengths: [2, 3, 4].into_iter().collect(),
            retry_budget: DEFAULT_RETRY_BUDGET,
            templates: TemplateSet::default(),
            partition: "all".into(),
        }
    }
}

/// Unbounded candidate stream. Candidate `i` uses its own generator seeded
/// with `split(seed, i)`, so any index can be produced independently.
pub struct Composer<'c> {
    corpus: &'c AtomCorpus,
    config: ComposeConfig,
    lengths: Vec<usize>,
    seed: u64,
    corpus_hash: String,
    next_index: u64,
    failed: bool,
}

impl<'c> Composer<'c> {
    pub fn new(corpus: &'c AtomCorpus, config: ComposeConfig, seed: u64) -> Result<Self, ComposeError> {
        if corpus.is_empty() {
            return Err(ComposeError::EmptyCorpus);
        }
        let lengths: Vec<usize> = config.lengths.iter().copied().collect();
        match lengths.first() {
            None => return Err(ComposeError::NoLengths),
            Some(&l) if l < 2 => return Err(ComposeError::ChainTooShort(l)),
            _ => {}
        }
        Ok(Composer { corpus_hash: corpus.content_hash(), corpus, config, lengths, seed, next_index: 0, failed: false })
    }

    /// Produces candidate number `index`.
    pub fn candidate(&self, index: u64) -> Result<SyntheticCandidate, ComposeError> {
        let cand_seed = seed::split(self.seed, index);
        let mut rng = seed::rng(cand_seed);
        let length = *self.lengths.choose(&mut rng).expect("non-empty");
        let ids = sample_chain(self.corpus, length, &mut rng, self.config.retry_budget)?;
        let chain = Chain::from_ids(self.corpus, &ids, cand_seed)?;
        Ok(SyntheticCandidate {
            id: format!("{}-{index:06}", self.config.partition),
            prompt: assemble_prompt(&chain, self.corpus, &self.config.templates)?,
            response: assemble_response(&chain, self.corpus)?,
            provenance: Provenance {
                corpus_hash: self.corpus_hash.clone(),
                partition: self.config.partition.clone(),
                seed: cand_seed,
            },
            chain,
        })
    }
}

impl Iterator for Composer<'_> {
    type Item = Result<SyntheticCandidate, ComposeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.candidate(self.next_index);
        self.next_index += 1;
        self.failed = item.is_err();
        Some(item)
    }
}

/// The first `n_target` candidates of the stream for `seed`.
pub fn compose_candidates(
    corpus: &AtomCorpus,
    n_target: usize,
    config: &ComposeConfig,
    seed: u64,
) -> Result<Vec<SyntheticCandidate>, ComposeError> {
    if n_target == 0 {
        return Ok(Vec::new());
    }
    let composer = Composer::new(corpus, config.clone(), seed).map_err(|e| match e {
        ComposeError::EmptyCorpus => ComposeError::ExhaustedRetries { produced: 0 },
        other => other,
    })?;
    let mut out = Vec::with_capacity(n_target);
    for item in composer.take(n_target) {
        match item {
            Ok(c) => out.push(c),
            Err(ComposeError::DeadEnd { .. }) => return Err(ComposeError::ExhaustedRetries { produced: out.len() }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::atom;
    use rand::Rng as _;
    use ValueType::*;

    fn fgh() -> AtomCorpus {
        AtomCorpus::new(vec![atom("f", Int, Str), atom("g", Str, Int), atom("h", Int, Int)]).unwrap()
    }

    #[test]
    fn successor_of_f_is_g() {
        let c = fgh();
        // Brute force: the only Str-input atom is g, so every chain that
        // starts at f must continue with g.
        let successors: Vec<_> = c.atoms().iter().filter(|a| a.input_type == Str).collect();
        assert_eq!(successors.len(), 1);
        let mut hits = 0;
        for s in 0..200 {
            let ids = sample_chain(&c, 2, &mut seed::rng(s), 50).unwrap();
            if ids[0] == "f" {
                assert_eq!(ids, ["f", "g"]);
                hits += 1;
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn dead_end_and_empty() {
        let c = AtomCorpus::new(vec![atom("f", Int, Str)]).unwrap();
        assert_eq!(sample_chain(&c, 2, &mut seed::rng(0), 50), Err(ComposeError::DeadEnd { restarts: 50 }));
        assert_eq!(sample_chain(&AtomCorpus::default(), 2, &mut seed::rng(0), 50), Err(ComposeError::EmptyCorpus));
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = fgh();
        let a = sample_chain(&c, 4, &mut seed::rng(9), 50).unwrap();
        let b = sample_chain(&c, 4, &mut seed::rng(9), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_immediate_repeats() {
        let c = AtomCorpus::new(vec![atom("h", Int, Int), atom("k", Int, Int)]).unwrap();
        for s in 0..100 {
            let ids = sample_chain(&c, 4, &mut seed::rng(s), 50).unwrap();
            assert!(ids.windows(2).all(|w| w[0] != w[1]), "{ids:?}");
        }
    }

    #[test]
    fn response_threads_variables() {
        let c = fgh();
        let chain = Chain::from_ids(&c, &["f", "g"], 0).unwrap();
        let r = assemble_response(&chain, &c).unwrap();
        assert!(r.contains("def f(x):") && r.contains("def g(x):"));
        assert!(r.ends_with("def solve(x):\n    v1 = f(x)\n    v2 = g(v1)\n    return v2\n"));
    }

    #[test]
    fn repeated_atom_defined_once_called_twice() {
        let c = AtomCorpus::new(vec![atom("h", Int, Int), atom("k", Int, Int)]).unwrap();
        let chain = Chain::from_ids(&c, &["h", "k", "h"], 0).unwrap();
        let r = assemble_response(&chain, &c).unwrap();
        assert_eq!(r.matches("def h(").count(), 1);
        assert_eq!(r.matches("= h(").count(), 2);
        assert!(matches!(
            assemble_response(&Chain { atom_ids: vec!["zz".into()], ..chain }, &c),
            Err(ComposeError::UnknownAtomId(_))
        ));
    }

    #[test]
    fn prompt_embeds_each_atom_prompt_in_order() {
        let c = fgh();
        let chain = Chain::from_ids(&c, &["f", "g"], 0).unwrap();
        let p = assemble_prompt(&chain, &c, &TemplateSet::default()).unwrap();
        let pf = p.find("Prompt for f.").unwrap();
        let pg = p.find("Prompt for g.").unwrap();
        assert!(pf < pg);
        assert_eq!(p.matches("Prompt for").count(), 2);

        let single = Chain::from_ids(&c, &["h"], 0).unwrap();
        assert_eq!(assemble_prompt(&single, &c, &TemplateSet::default()).unwrap(), "Prompt for h.");

        let plain = TemplateSet {
            header: String::new(),
            first: Some("{prompt}".into()),
            middle: Some(", then {prompt}".into()),
            last: Some(", then {prompt}".into()),
            footer: String::new(),
        };
        let alt = TemplateSet {
            middle: Some(" and next {prompt}".into()),
            last: Some(" and next {prompt}".into()),
            ..plain.clone()
        };
        let p1 = assemble_prompt(&chain, &c, &plain).unwrap();
        let p2 = assemble_prompt(&chain, &c, &alt).unwrap();
        assert_eq!(p1, "Prompt for f., then Prompt for g.");
        assert_eq!(p1.replace(", then ", " and next "), p2);

        let broken = TemplateSet { last: None, ..plain };
        assert_eq!(assemble_prompt(&chain, &c, &broken), Err(ComposeError::MissingTemplate("last")));
    }

    #[test]
    fn compose_counts() {
        let c = fgh();
        let cfg = ComposeConfig::default();
        assert!(compose_candidates(&c, 0, &cfg, 1).unwrap().is_empty());
        assert_eq!(compose_candidates(&c, 25, &cfg, 1).unwrap().len(), 25);
        let isolated = AtomCorpus::new(vec![atom("f", Int, Str)]).unwrap();
        assert_eq!(compose_candidates(&isolated, 5, &cfg, 1), Err(ComposeError::ExhaustedRetries { produced: 0 }));
    }

    #[test]
    fn stream_is_reproducible() {
        let c = fgh();
        let cfg = ComposeConfig::default();
        assert_eq!(compose_candidates(&c, 50, &cfg, 3).unwrap(), compose_candidates(&c, 50, &cfg, 3).unwrap());
        assert_ne!(compose_candidates(&c, 50, &cfg, 3).unwrap(), compose_candidates(&c, 50, &cfg, 4).unwrap());
    }

    fn random_corpus(seed: u64, n: usize) -> AtomCorpus {
        let mut r = seed::rng(seed);
        let atoms = (0..n)
            .map(|i| atom(&format!("a{i}"), ValueType::ALL[r.random_range(0..4)], ValueType::ALL[r.random_range(0..4)]))
            .collect();
        AtomCorpus::new(atoms).unwrap()
    }

    #[test]
    fn type_soundness_and_length_law() {
        let c = random_corpus(5, 40);
        let cands = compose_candidates(&c, 10_000, &ComposeConfig::default(), 77).unwrap();
        let mut counts = [0usize; 5];
        for cand in &cands {
            assert!(cand.chain.is_type_sound(&c));
            counts[cand.chain.len()] += 1;
        }
        // Binomial(10000, 1/3): sigma = sqrt(10000 * 1/3 * 2/3) ~ 47.1.
        let sigma = (10_000.0_f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for len in 2..=4 {
            assert!((counts[len] as f64 - 10_000.0 / 3.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
