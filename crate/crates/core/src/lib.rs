//! Synthesis of verified code-instruction datasets by chaining typed atomic
//! functions, plus the sandbox judge, deduplication, evaluation and PPO
//! reward math used to train on them.
//!
//! The pipeline: load an [`AtomCorpus`], split it with [`partition_corpus`],
//! compose type-compatible chains ([`Composer`]), mock inputs
//! ([`mock_input_sets`]), trace them in the [`sandbox`], reject invalid
//! candidates ([`check_validity`]), drop near duplicates ([`Deduplicator`])
//! and write [`dataset::DatasetRecord`]s. [`dataset::build_datasets`] runs
//! all of it.

pub mod compose;
pub mod corpus;
pub mod dataset;
pub mod dedup;
pub mod eval;
pub mod filter;
pub mod mock;
pub mod rl;
pub mod sandbox;
pub mod seed;
pub mod value;

pub use compose::{compose_candidates, Chain, ComposeConfig, ComposeError, Composer, SyntheticCandidate, TemplateSet};
pub use corpus::{
    load_corpus, partition_corpus, save_corpus, AtomCorpus, AtomicFunction, CorpusError, CorpusPartition, SetLabel,
};
pub use dataset::{BuildConfig, BuildError, BuiltDatasets, DatasetRecord, MixtureSpec, RecordKind, Sample};
pub use dedup::{Deduplicator, MinHashConfig};
pub use eval::{evaluate, summarize, EvalReport, ResponseFile};
pub use filter::{check_validity, emit_unit_tests, IdentityRule, Rule, UnitTestSet, ValidityVerdict};
pub use mock::{mock_input_sets, MockConfig, MockSet};
pub use rl::{PpoBatch, PpoHyper, RlError};
pub use sandbox::{run_unit_tests, ExecLimits, JudgeResult, Sandbox, SandboxError, SandboxPool};
pub use value::{Value, ValueType};
