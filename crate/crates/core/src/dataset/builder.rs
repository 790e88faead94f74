use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::records::{RecordMeta, Sample};
use crate::compose::{ComposeConfig, ComposeError, Composer, SyntheticCandidate, ENTRY_NAME};
use crate::corpus::{AtomCorpus, AtomicFunction, CorpusError, CorpusPartition, SetLabel};
use crate::dedup::{Decision, DedupConfigError, DedupReport, DedupText, Deduplicator, MinHashConfig};
use crate::filter::{check_validity, unit_tests_from_completed, IdentityRule, Rule};
use crate::mock::{mock_input_sets, MockConfig};
use crate::sandbox::{
    execute_chain, trace_stages, ExecLimits, ExecutionTrace, SandboxError, SandboxPool, StagePlan, TraceOutcome,
};
use crate::seed;

pub const ATOM_BASE: &str = "atom_base";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Composite record counts for set A, B and C.
    pub targets: [usize; 3],
    pub lengths: Vec<usize>,
    pub retry_budget: usize,
    pub mock: MockConfig,
    pub limits: ExecLimits,
    pub identity: IdentityRule,
    pub minhash: MinHashConfig,
    /// Candidates sent to the pool at once.
    pub batch_size: usize,
    /// Candidates composed per set before giving up; 0 means
    /// `20 * target + 1000`.
    pub max_attempts: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            targets: [5000, 5000, 1000],
            lengths: vec![2, 3, 4],
            retry_budget: crate::compose::DEFAULT_RETRY_BUDGET,
            mock: MockConfig::default(),
            limits: ExecLimits::default(),
            identity: IdentityRule::default(),
            minhash: MinHashConfig::default(),
            batch_size: 256,
            max_attempts: 0,
        }
    }
}

impl BuildConfig {
    fn attempt_budget(&self, target: usize) -> usize {
        if self.max_attempts > 0 {
            self.max_attempts
        } else {
            20 * target + 1000
        }
    }
}

/// Per-dataset accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetStats {
    pub target: usize,
    pub produced: usize,
    pub composed: usize,
    pub compose_failures: usize,
    pub executed: usize,
    pub rejected: usize,
    /// Rejections per rule; a candidate may count under several rules.
    pub rejections_by_rule: BTreeMap<String, usize>,
    pub sandbox_failures: usize,
    pub dedup: DedupReport,
    pub length_histogram: BTreeMap<usize, usize>,
}

impl SetStats {
    pub fn shortfall(&self) -> usize {
        self.target.saturating_sub(self.produced)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub seed: u64,
    pub corpus_hash: String,
    pub atom_base: usize,
    pub atom_base_without_tests: Vec<String>,
    pub sets: BTreeMap<String, SetStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltDatasets {
    pub atom_base: Vec<Sample>,
    pub composite_a: Vec<Sample>,
    pub composite_b: Vec<Sample>,
    pub composite_c: Vec<Sample>,
    pub stats: BuildStats,
}

impl BuiltDatasets {
    pub fn composite(&self, label: SetLabel) -> &[Sample] {
        match label {
            SetLabel::A => &self.composite_a,
            SetLabel::B => &self.composite_b,
            SetLabel::C => &self.composite_c,
        }
    }

    fn composite_mut(&mut self, label: SetLabel) -> &mut Vec<Sample> {
        match label {
            SetLabel::A => &mut self.composite_a,
            SetLabel::B => &mut self.composite_b,
            SetLabel::C => &mut self.composite_c,
        }
    }

    /// Every dataset with its name, atom base first.
    pub fn named(&self) -> [(&'static str, &[Sample]); 4] {
        [
            (ATOM_BASE, &self.atom_base),
            (SetLabel::A.dataset_name(), &self.composite_a),
            (SetLabel::B.dataset_name(), &self.composite_b),
            (SetLabel::C.dataset_name(), &self.composite_c),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("{dataset}: produced {produced} of {target} records before the attempt budget ran out")]
    ExhaustedRetries { dataset: String, produced: usize, target: usize, partial: Box<BuiltDatasets> },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Dedup(#[from] DedupConfigError),
}

fn is_fatal(e: &SandboxError) -> bool {
    matches!(e, SandboxError::Unavailable(..) | SandboxError::SpawnFailure(_) | SandboxError::InvalidLimits(_))
}

fn mock_seed(candidate_seed: u64) -> u64 {
    seed::split_named(candidate_seed, "mock")
}

/// Renders every atom as a sample whose tests call the atom's own function.
pub fn build_atom_base(
    corpus: &AtomCorpus,
    pool: &SandboxPool,
    config: &BuildConfig,
    seed: u64,
) -> Result<Vec<Sample>, BuildError> {
    let base_seed = seed::split_named(seed, ATOM_BASE);
    let jobs: Vec<(usize, &AtomicFunction)> = corpus.atoms().iter().enumerate().collect();
    let traced = pool.map(&jobs, |sb, &(i, atom)| {
        let s = seed::split(base_seed, i as u64);
        let inputs = mock_input_sets(atom.input_type, config.mock.k, mock_seed(s), &config.mock);
        let stage = StagePlan {
            atom_id: atom.id.clone(),
            fn_name: atom.fn_name.clone(),
            input_type: atom.input_type,
            output_type: atom.output_type,
        };
        let outcome = trace_stages(sb, &atom.id, &atom.code, &[stage], &inputs.values, &config.limits);
        (s, outcome)
    });
    let mut out = Vec::with_capacity(jobs.len());
    for ((_, atom), (s, outcome)) in jobs.iter().zip(traced) {
        let tests = match outcome {
            Ok(TraceOutcome::Traced(traces)) => unit_tests_from_completed(&atom.fn_name, &traces),
            Ok(_) => Vec::new(),
            Err(e) if is_fatal(&e) => return Err(e.into()),
            Err(_) => Vec::new(),
        };
        out.push(Sample {
            prompt: atom.prompt.clone(),
            response: atom.code.clone(),
            unit_tests: tests,
            meta: RecordMeta {
                id: format!("{ATOM_BASE}-{}", atom.id),
                dataset: ATOM_BASE.into(),
                atoms: vec![atom.id.clone()],
                length: 1,
                seed: s,
            },
        });
    }
    Ok(out)
}

fn sample_from(candidate: &SyntheticCandidate, traces: &[ExecutionTrace], dataset: &str) -> Sample {
    Sample {
        prompt: candidate.prompt.clone(),
        response: candidate.response.clone(),
        unit_tests: unit_tests_from_completed(ENTRY_NAME, traces),
        meta: RecordMeta {
            id: candidate.id.clone(),
            dataset: dataset.into(),
            atoms: candidate.chain.atom_ids.clone(),
            length: candidate.chain.len(),
            seed: candidate.provenance.seed,
        },
    }
}

/// Composes, executes, filters and deduplicates candidates drawn from
/// `corpus` until `target` samples are accepted or the attempt budget is
/// spent. Acceptance is decided in candidate order, so the output does not
/// depend on the pool size or batch size.
#[allow(clippy::too_many_arguments)]
pub fn build_composite(
    corpus: &AtomCorpus,
    dataset: &str,
    target: usize,
    pool: &SandboxPool,
    config: &BuildConfig,
    dedup: &mut Deduplicator,
    seed: u64,
) -> Result<(Vec<Sample>, SetStats), BuildError> {
    let mut stats = SetStats { target, ..SetStats::default() };
    let mut out = Vec::with_capacity(target);
    if target == 0 {
        return Ok((out, stats));
    }
    let compose_config = ComposeConfig {
        lengths: config.lengths.iter().copied().collect(),
        retry_budget: config.retry_budget,
        partition: dataset.into(),
        ..ComposeConfig::default()
    };
    let composer = Composer::new(corpus, compose_config, seed)?;
    let budget = config.attempt_budget(target) as u64;
    let batch_size = config.batch_size.max(1) as u64;
    let mut next = 0u64;

    while out.len() < target && next < budget {
        let end = (next + batch_size).min(budget);
        let mut batch = Vec::new();
        for index in next..end {
            stats.composed += 1;
            match composer.candidate(index) {
                Ok(c) => match dedup.check(&c.dedup_text()) {
                    Decision::Kept => batch.push(c),
                    d => stats.dedup.record(d),
                },
                Err(ComposeError::DeadEnd { .. }) => stats.compose_failures += 1,
                Err(e) => return Err(e.into()),
            }
        }
        next = end;

        let results = pool.map(&batch, |sb, c| {
            let inputs = mock_input_sets(c.chain.input_type, config.mock.k, mock_seed(c.provenance.seed), &config.mock);
            execute_chain(sb, corpus, c, &inputs, &config.limits)
        });

        for (candidate, result) in batch.iter().zip(results) {
            if out.len() == target {
                break;
            }
            stats.executed += 1;
            let traces = match result {
                Ok(t) => t,
                Err(e) if is_fatal(&e) => return Err(e.into()),
                Err(e) => {
                    tracing::debug!(candidate = %candidate.id, error = %e, "sandbox failure");
                    stats.sandbox_failures += 1;
                    continue;
                }
            };
            let verdict = match check_validity(&traces, config.identity) {
                Ok(v) => v,
                Err(_) => {
                    stats.sandbox_failures += 1;
                    continue;
                }
            };
            if !verdict.accepted {
                stats.rejected += 1;
                for rule in &verdict.violated_rules {
                    *stats.rejections_by_rule.entry(rule.code().to_string()).or_default() += 1;
                }
                continue;
            }
            let decision = dedup.insert(&candidate.dedup_text());
            stats.dedup.record(decision);
            if decision != Decision::Kept {
                continue;
            }
            *stats.length_histogram.entry(candidate.chain.len()).or_default() += 1;
            out.push(sample_from(candidate, &traces, dataset));
        }
    }
    stats.produced = out.len();
    Ok((out, stats))
}

/// Builds the atom base and the three composite datasets, each composite
/// drawing only on its own partition set. One deduplicator spans all three
/// composites, filled in the order A, B, C.
pub fn build_datasets(
    corpus: &AtomCorpus,
    partition: &CorpusPartition,
    pool: &SandboxPool,
    config: &BuildConfig,
    seed: u64,
) -> Result<BuiltDatasets, BuildError> {
    partition.check(corpus)?;
    config.limits.validate()?;
    let mut built = BuiltDatasets::default();
    built.stats.seed = seed;
    built.stats.corpus_hash = corpus.content_hash();
    built.atom_base = build_atom_base(corpus, pool, config, seed)?;
    built.stats.atom_base = built.atom_base.len();
    built.stats.atom_base_without_tests =
        built.atom_base.iter().filter(|s| s.unit_tests.is_empty()).map(|s| s.meta.id.clone()).collect();

    let mut dedup = Deduplicator::new(config.minhash.clone())?;
    let mut shortfall = None;
    for (label, target) in SetLabel::ALL.into_iter().zip(config.targets) {
        let name = label.dataset_name();
        let sub = corpus.subset(partition.set(label))?;
        let set_seed = seed::split_named(seed, name);
        let (samples, stats) = if target > 0 && sub.is_empty() {
            (Vec::new(), SetStats { target, ..SetStats::default() })
        } else {
            build_composite(&sub, name, target, pool, config, &mut dedup, set_seed)?
        };
        tracing::info!(dataset = name, produced = stats.produced, target, "composite built");
        if stats.shortfall() > 0 && shortfall.is_none() {
            shortfall = Some((name.to_string(), stats.produced, target));
        }
        *built.composite_mut(label) = samples;
        built.stats.sets.insert(name.into(), stats);
    }
    match shortfall {
        Some((dataset, produced, target)) => {
            Err(BuildError::ExhaustedRetries { dataset, produced, target, partial: Box::new(built) })
        }
        None => Ok(built),
    }
}

/// Rule codes in a fixed order, for reports.
pub fn rule_codes() -> [&'static str; 4] {
    [Rule::RuntimeError, Rule::NoneOutput, Rule::IdentityStage, Rule::ConstantOutput].map(Rule::code)
}
