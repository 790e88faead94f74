use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chainsynth::dataset::BuildConfig;
use chainsynth::dedup::MinHashConfig;
use chainsynth::mock::MockConfig;
use chainsynth::sandbox::ExecLimits;
use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::jobs::*;
use crate::manifest::VERSION;

/// Builds verified code-instruction datasets from a corpus of typed atomic
/// functions, and judges, mixes and evaluates them.
///
/// Every run writes a JSON manifest (job, seeds, config hash, version and
/// output digests). `chainsynth replay <manifest>` re-runs it. The sandbox
/// interpreter is taken from $CHAINSYNTH_PYTHON (default: python3).
#[derive(Debug, Parser)]
#[command(name = "chainsynth", version = VERSION)]
pub struct Cli {
    /// TOML file whose values override the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the corpus into three disjoint atom sets.
    Partition(PartitionArgs),
    /// Build the atom base and the three composite datasets.
    Compose(ComposeArgs),
    /// Drop exact and near duplicates across record files.
    Dedup(DedupArgs),
    /// Convert built samples into SFT or RL records.
    Emit(EmitArgs),
    /// Resample and blend record files.
    Mix(MixArgs),
    /// Score model responses against an RL dataset (pass@1).
    Eval(EvalArgs),
    /// Summarize record files.
    Stats(StatsArgs),
    /// Run the HTTP judge service.
    Serve(ServeArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> =
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<usize>| format!("expected three comma-separated counts, got {}", v.len()))
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,
    /// Set sizes A,B,C; must sum to the corpus size.
    #[arg(long, default_value = "34,33,33", value_parser = parse_triple)]
    pub sizes: [usize; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "partition.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,
    /// Partition file written by `partition`; by default the corpus is split
    /// with --sizes and --seed.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[arg(long, default_value = "34,33,33", value_parser = parse_triple)]
    pub sizes: [usize; 3],
    /// Records per composite dataset.
    #[arg(long, conflicts_with = "counts")]
    pub count: Option<usize>,
    /// Records for composites A,B,C.
    #[arg(long, value_parser = parse_triple)]
    pub counts: Option<[usize; 3]>,
    /// Allowed chain lengths.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mocked input sets per candidate.
    #[arg(long, default_value_t = 10)]
    pub mock_k: usize,
    /// Sandbox workers (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Per-job wall clock limit.
    #[arg(long, default_value_t = ExecLimits::default().wall_clock_ms)]
    pub wall_clock_ms: u64,
    /// Candidates tried per composite before giving up (0: 20 x count + 1000).
    #[arg(long, default_value_t = 0)]
    pub max_attempts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Record files, read in order; earlier records win.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Estimated Jaccard similarity at or above which records are near
    /// duplicates.
    #[arg(long, default_value_t = MinHashConfig::default().similarity_threshold)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    /// Sample file written by `compose`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: EmitFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Components as name=rate[@seed], e.g. "composite_a=1%,atom_base=600%".
    #[arg(long)]
    pub spec: String,
    /// Record files as name=path, or a path whose file stem is the name.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// RL record file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Response file: one {"prompt_id", "response"} object per line.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value_t = ExecLimits::default().wall_clock_ms)]
    pub wall_clock_ms: u64,
    /// Write the full JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, default_value_t = 8)]
    pub pool: usize,
    /// Waiting requests before load is shed (0: 4 x pool).
    #[arg(long, default_value_t = 0)]
    pub queue_bound: usize,
    #[arg(long, default_value_t = ExecLimits::default().wall_clock_ms)]
    pub wall_clock_ms: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Fail unless every output matches its recorded digest.
    #[arg(long)]
    pub verify: bool,
}

fn named_inputs(inputs: &[String]) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    for raw in inputs {
        let (name, path) = match raw.split_once('=') {
            Some((n, p)) => (n.trim().to_string(), PathBuf::from(p)),
            None => {
                let path = PathBuf::from(raw);
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (stem, path)
            }
        };
        if name.is_empty() {
            return Err(CliError::Usage(format!("cannot name input {raw:?}")));
        }
        if out.insert(name.clone(), path).is_some() {
            return Err(CliError::Usage(format!("input {name} given twice")));
        }
    }
    Ok(out)
}

impl ComposeArgs {
    fn into_job(self) -> Result<Job, CliError> {
        let lengths: BTreeSet<usize> = self.lengths.iter().copied().collect();
        if lengths.is_empty() || lengths.iter().any(|&l| l < 2) {
            return Err(CliError::Usage("--lengths needs values of at least 2".into()));
        }
        let defaults = BuildConfig::default();
        let targets = match (self.count, self.counts) {
            (Some(n), _) => [n; 3],
            (None, Some(c)) => c,
            (None, None) => defaults.targets,
        };
        Ok(Job::Compose(ComposeJob {
            corpus: self.corpus,
            partition_file: self.partition,
            sizes: self.sizes,
            seed: self.seed,
            workers: self.workers,
            out: self.out,
            build: BuildConfig {
                targets,
                lengths: lengths.into_iter().collect(),
                mock: MockConfig { k: self.mock_k, ..defaults.mock.clone() },
                limits: ExecLimits { wall_clock_ms: self.wall_clock_ms, ..defaults.limits },
                max_attempts: self.max_attempts,
                ..defaults
            },
        }))
    }
}

/// What the parsed command line asks for.
pub enum Request {
    Run(Box<Job>),
    Replay(ReplayArgs),
}

impl Command {
    pub fn into_request(self) -> Result<Request, CliError> {
        let job = match self {
            Command::Partition(a) => {
                Job::Partition(PartitionJob { corpus: a.corpus, sizes: a.sizes, seed: a.seed, out: a.out })
            }
            Command::Compose(a) => a.into_job()?,
            Command::Dedup(a) => Job::Dedup(DedupJob {
                inputs: a.inputs,
                out: a.out,
                minhash: MinHashConfig { similarity_threshold: a.threshold, ..MinHashConfig::default() },
            }),
            Command::Emit(a) => Job::Emit(EmitJob { input: a.input, format: a.format, out: a.out }),
            Command::Mix(a) => {
                Job::Mix(MixJob { spec: a.spec, inputs: named_inputs(&a.inputs)?, seed: a.seed, out: a.out })
            }
            Command::Eval(a) => Job::Eval(EvalJob {
                dataset: a.dataset,
                responses: a.responses,
                label: a.label,
                limits: ExecLimits { wall_clock_ms: a.wall_clock_ms, ..ExecLimits::default() },
                workers: a.workers,
                report: a.report,
            }),
            Command::Stats(a) => Job::Stats(StatsJob { inputs: a.inputs, out: a.out }),
            Command::Serve(a) => Job::Serve(ServeJob {
                bind: a.bind,
                pool: a.pool,
                queue_bound: a.queue_bound,
                limits: ExecLimits { wall_clock_ms: a.wall_clock_ms, ..ExecLimits::default() },
                ..ServeJob::default()
            }),
            Command::Replay(a) => return Ok(Request::Replay(a)),
        };
        Ok(Request::Run(Box::new(job)))
    }
}
