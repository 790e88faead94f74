//! One serializable job per subcommand. A job holds every parameter of its
//! run, so a manifest that stores the job can replay it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chainsynth::corpus::{load_corpus, partition_corpus, CorpusPartition, SetLabel};
use chainsynth::dataset::{
    build_datasets, emit_records, load_records, mix, record_stats, to_rl_records, to_sft_records, BuildConfig,
    BuildError, BuiltDatasets, DatasetRecord, LineRecord, MixtureSpec, Sample, ATOM_BASE,
};
use chainsynth::dedup::{dedup_records, DedupText, MinHashConfig};
use chainsynth::eval::{evaluate, summarize, ResponseFile};
use chainsynth::sandbox::{ExecLimits, Sandbox, SandboxPool};
use chainsynth::seed;
use chainsynth_service::{serve, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Partition(PartitionJob),
    Compose(ComposeJob),
    Dedup(DedupJob),
    Emit(EmitJob),
    Mix(MixJob),
    Eval(EvalJob),
    Stats(StatsJob),
    Serve(ServeJob),
}

/// What a finished job leaves behind for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

impl Job {
    pub const COMMANDS: [&'static str; 8] = ["partition", "compose", "dedup", "emit", "mix", "eval", "stats", "serve"];

    pub fn command(&self) -> &'static str {
        match self {
            Job::Partition(_) => "partition",
            Job::Compose(_) => "compose",
            Job::Dedup(_) => "dedup",
            Job::Emit(_) => "emit",
            Job::Mix(_) => "mix",
            Job::Eval(_) => "eval",
            Job::Stats(_) => "stats",
            Job::Serve(_) => "serve",
        }
    }

    /// Where the manifest goes when `--manifest` is not given.
    pub fn default_manifest(&self) -> PathBuf {
        let beside = |p: &Path| {
            let mut name = p.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            p.with_file_name(name)
        };
        match self {
            Job::Compose(j) => j.out.join("manifest.json"),
            Job::Partition(PartitionJob { out, .. })
            | Job::Dedup(DedupJob { out, .. })
            | Job::Emit(EmitJob { out, .. })
            | Job::Mix(MixJob { out, .. }) => beside(out),
            Job::Eval(EvalJob { report: Some(p), .. }) | Job::Stats(StatsJob { out: Some(p), .. }) => beside(p),
            _ => PathBuf::from(format!("chainsynth-{}.manifest.json", self.command())),
        }
    }

    /// Runs the job. `before_block` is called once the job has reached a
    /// state worth recording but before it blocks indefinitely (the server).
    pub fn run(&self, before_block: &mut dyn FnMut(&Outcome) -> Result<(), CliError>) -> Result<Outcome, CliError> {
        match self {
            Job::Partition(j) => j.run(),
            Job::Compose(j) => j.run(),
            Job::Dedup(j) => j.run(),
            Job::Emit(j) => j.run(),
            Job::Mix(j) => j.run(),
            Job::Eval(j) => j.run(),
            Job::Stats(j) => j.run(),
            Job::Serve(j) => j.run(before_block),
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io { path: path.into(), source: e.into() })
}

/// Either record shape found in pipeline files: a full sample (prompt,
/// response and tests) or an emitted SFT/RL record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyRecord {
    Record(DatasetRecord),
    Sample(Sample),
}

impl AnyRecord {
    fn into_record(self) -> DatasetRecord {
        match self {
            AnyRecord::Record(r) => r,
            AnyRecord::Sample(s) => s.to_sft(),
        }
    }
}

impl LineRecord for AnyRecord {
    fn check(&self) -> Result<(), String> {
        match self {
            AnyRecord::Record(r) => r.validate(),
            AnyRecord::Sample(_) => Ok(()),
        }
    }
}

impl DedupText for AnyRecord {
    fn dedup_text(&self) -> String {
        match self {
            AnyRecord::Record(r) => r.dedup_text(),
            AnyRecord::Sample(s) => s.dedup_text(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionJob {
    pub corpus: PathBuf,
    pub sizes: [usize; 3],
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for PartitionJob {
    fn default() -> Self {
        PartitionJob { corpus: "corpus".into(), sizes: [34, 33, 33], seed: 0, out: "partition.json".into() }
    }
}

impl PartitionJob {
    fn run(&self) -> Result<Outcome, CliError> {
        let corpus = load_corpus(&self.corpus)?;
        let partition = partition_corpus(&corpus, self.sizes, self.seed)?;
        write_json(&partition, &self.out)?;
        println!(
            "partitioned {} atoms into {}/{}/{} -> {}",
            corpus.len(),
            partition.set_a.len(),
            partition.set_b.len(),
            partition.set_c.len(),
            self.out.display()
        );
        Ok(Outcome { outputs: vec![self.out.clone()], seeds: BTreeMap::from([("partition".into(), self.seed)]) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeJob {
    pub corpus: PathBuf,
    /// Partition file from `partition`; when absent the corpus is split with
    /// `sizes` and `seed`.
    pub partition_file: Option<PathBuf>,
    pub sizes: [usize; 3],
    pub seed: u64,
    /// Sandbox workers; 0 means one per core.
    pub workers: usize,
    pub out: PathBuf,
    pub build: BuildConfig,
}

impl Default for ComposeJob {
    fn default() -> Self {
        ComposeJob {
            corpus: "corpus".into(),
            partition_file: None,
            sizes: [34, 33, 33],
            seed: 0,
            workers: 0,
            out: "out".into(),
            build: BuildConfig::default(),
        }
    }
}

impl ComposeJob {
    fn write_all(&self, built: &BuiltDatasets, partition: &CorpusPartition) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.out).map_err(CliError::io(&self.out))?;
        let mut outputs = Vec::new();
        let partition_path = self.out.join("partition.json");
        write_json(partition, &partition_path)?;
        outputs.push(partition_path);
        for (name, samples) in built.named() {
            let path = self.out.join(format!("{name}.jsonl"));
            emit_records(samples, &path)?;
            outputs.push(path);
        }
        let stats_path = self.out.join("build_stats.json");
        write_json(&built.stats, &stats_path)?;
        outputs.push(stats_path);
        Ok(outputs)
    }

    fn run(&self) -> Result<Outcome, CliError> {
        let corpus = load_corpus(&self.corpus)?;
        let mut seeds = BTreeMap::from([("master".to_string(), self.seed)]);
        let partition = match &self.partition_file {
            Some(p) => read_json::<CorpusPartition>(p)?,
            None => {
                seeds.insert("partition".into(), self.seed);
                partition_corpus(&corpus, self.sizes, self.seed)?
            }
        };
        seeds.insert(ATOM_BASE.into(), seed::split_named(self.seed, ATOM_BASE));
        for label in SetLabel::ALL {
            let name = label.dataset_name();
            seeds.insert(name.into(), seed::split_named(self.seed, name));
        }
        let pool = SandboxPool::new(Sandbox::from_env(), self.workers);
        let (built, failure) = match build_datasets(&corpus, &partition, &pool, &self.build, self.seed) {
            Ok(b) => (b, None),
            Err(BuildError::ExhaustedRetries { dataset, produced, target, partial }) => {
                (*partial, Some(BuildError::ExhaustedRetries { dataset, produced, target, partial: Box::default() }))
            }
            Err(e) => return Err(e.into()),
        };
        let outputs = self.write_all(&built, &partition)?;
        for (name, samples) in built.named() {
            println!("{name:<12} {:>6} records", samples.len());
        }
        if let Some(e) = failure {
            return Err(e.into());
        }
        Ok(Outcome { outputs, seeds })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupJob {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub minhash: MinHashConfig,
}

impl Default for DedupJob {
    fn default() -> Self {
        DedupJob { inputs: Vec::new(), out: "dedup.jsonl".into(), minhash: MinHashConfig::default() }
    }
}

fn load_all(inputs: &[PathBuf]) -> Result<Vec<AnyRecord>, CliError> {
    let mut all = Vec::new();
    for p in inputs {
        all.extend(load_records::<AnyRecord>(p)?);
    }
    Ok(all)
}

impl DedupJob {
    fn run(&self) -> Result<Outcome, CliError> {
        let (kept, report) = dedup_records(load_all(&self.inputs)?, &self.minhash)?;
        emit_records(&kept, &self.out)?;
        println!("kept {} exact {} near {} -> {}", report.kept, report.exact, report.near, self.out.display());
        Ok(Outcome { outputs: vec![self.out.clone()], ..Outcome::default() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmitFormat {
    Sft,
    Rl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmitJob {
    pub input: PathBuf,
    pub format: EmitFormat,
    pub out: PathBuf,
}

impl Default for EmitJob {
    fn default() -> Self {
        EmitJob { input: PathBuf::new(), format: EmitFormat::Sft, out: "records.jsonl".into() }
    }
}

impl EmitJob {
    fn run(&self) -> Result<Outcome, CliError> {
        let samples: Vec<Sample> = load_records(&self.input)?;
        let records = match self.format {
            EmitFormat::Sft => to_sft_records(&samples),
            EmitFormat::Rl => to_rl_records(&samples)?,
        };
        emit_records(&records, &self.out)?;
        println!("wrote {} {:?} records -> {}", records.len(), self.format, self.out.display());
        Ok(Outcome { outputs: vec![self.out.clone()], ..Outcome::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixJob {
    /// `name=rate[@seed],...`, e.g. `composite_a=1%,atom_base=600%`.
    pub spec: String,
    /// Record file per component name.
    pub inputs: BTreeMap<String, PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for MixJob {
    fn default() -> Self {
        MixJob { spec: String::new(), inputs: BTreeMap::new(), seed: 0, out: "mix.jsonl".into() }
    }
}

impl MixJob {
    fn run(&self) -> Result<Outcome, CliError> {
        let spec = MixtureSpec::parse(&self.spec, self.seed)?;
        let mut datasets = Vec::new();
        let mut seeds = BTreeMap::from([("master".to_string(), self.seed)]);
        for (i, c) in spec.components.iter().enumerate() {
            let path = self
                .inputs
                .get(&c.name)
                .ok_or_else(|| CliError::Usage(format!("no --input given for mixture component {}", c.name)))?;
            datasets.push(load_records::<AnyRecord>(path)?);
            seeds.insert(c.name.clone(), c.seed.unwrap_or_else(|| seed::split(self.seed, i as u64)));
        }
        let mixed = mix(&spec, &datasets)?;
        emit_records(&mixed, &self.out)?;
        println!("mixed {} records -> {}", mixed.len(), self.out.display());
        Ok(Outcome { outputs: vec![self.out.clone()], seeds })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalJob {
    /// RL record file.
    pub dataset: PathBuf,
    pub responses: PathBuf,
    /// Row label in the summary; defaults to the dataset file stem.
    pub label: Option<String>,
    pub limits: ExecLimits,
    pub workers: usize,
    pub report: Option<PathBuf>,
}

impl Default for EvalJob {
    fn default() -> Self {
        EvalJob {
            dataset: PathBuf::new(),
            responses: PathBuf::new(),
            label: None,
            limits: ExecLimits::default(),
            workers: 0,
            report: None,
        }
    }
}

impl EvalJob {
    fn run(&self) -> Result<Outcome, CliError> {
        let records: Vec<DatasetRecord> = load_records(&self.dataset)?;
        let responses = ResponseFile::load(&self.responses)?;
        let label = self.label.clone().unwrap_or_else(|| {
            self.dataset.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        });
        let pool = SandboxPool::new(Sandbox::from_env(), self.workers);
        let report = evaluate(&label, &records, &responses, &self.limits, &pool)?;
        print!("{}", summarize(std::slice::from_ref(&report)));
        let mut outputs = Vec::new();
        if let Some(path) = &self.report {
            write_json(&report, path)?;
            outputs.push(path.clone());
        }
        Ok(Outcome { outputs, ..Outcome::default() })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsJob {
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
}

impl StatsJob {
    fn run(&self) -> Result<Outcome, CliError> {
        let records: Vec<DatasetRecord> = load_all(&self.inputs)?.into_iter().map(AnyRecord::into_record).collect();
        let stats = record_stats(&records);
        println!("{}", serde_json::to_string_pretty(&stats).expect("serializable"));
        let mut outputs = Vec::new();
        if let Some(path) = &self.out {
            write_json(&stats, path)?;
            outputs.push(path.clone());
        }
        Ok(Outcome { outputs, ..Outcome::default() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeJob {
    pub bind: String,
    pub pool: usize,
    /// 0 means four times the pool size.
    pub queue_bound: usize,
    pub max_code_bytes: usize,
    pub limits: ExecLimits,
}

impl Default for ServeJob {
    fn default() -> Self {
        let d = ServiceConfig::default();
        ServeJob {
            bind: "127.0.0.1:8080".into(),
            pool: d.pool_size,
            queue_bound: d.queue_bound,
            max_code_bytes: d.max_code_bytes,
            limits: d.limits,
        }
    }
}

impl ServeJob {
    fn run(&self, before_block: &mut dyn FnMut(&Outcome) -> Result<(), CliError>) -> Result<Outcome, CliError> {
        let config = ServiceConfig {
            pool_size: self.pool,
            queue_bound: self.queue_bound,
            max_code_bytes: self.max_code_bytes,
            limits: self.limits,
            sandbox: Sandbox::from_env(),
        };
        let handle = serve(&self.bind, config, true)?;
        println!("listening on {}", handle.url());
        let outcome = Outcome::default();
        before_block(&outcome)?;
        handle.wait().map_err(CliError::io(&self.bind))?;
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_round_trip_through_json() {
        let jobs = [
            Job::Partition(PartitionJob::default()),
            Job::Compose(ComposeJob::default()),
            Job::Dedup(DedupJob::default()),
            Job::Emit(EmitJob::default()),
            Job::Mix(MixJob::default()),
            Job::Eval(EvalJob::default()),
            Job::Stats(StatsJob::default()),
            Job::Serve(ServeJob::default()),
        ];
        for job in jobs {
            let text = serde_json::to_string(&job).unwrap();
            assert!(text.starts_with(&format!("{{\"command\":\"{}\"", job.command())), "{text}");
            assert_eq!(serde_json::from_str::<Job>(&text).unwrap(), job);
        }
    }

    #[test]
    fn default_manifest_sits_beside_outputs() {
        let compose = Job::Compose(ComposeJob { out: "runs/x".into(), ..ComposeJob::default() });
        assert_eq!(compose.default_manifest(), PathBuf::from("runs/x/manifest.json"));
        let mix = Job::Mix(MixJob { out: "m/mix.jsonl".into(), ..MixJob::default() });
        assert_eq!(mix.default_manifest(), PathBuf::from("m/mix.jsonl.manifest.json"));
        assert_eq!(Job::Stats(StatsJob::default()).default_manifest(), PathBuf::from("chainsynth-stats.manifest.json"));
    }

    #[test]
    fn any_record_reads_both_shapes() {
        let sample = r#"{"prompt":"p","response":"r","unit_tests":["assert solve(1) == 1"],"meta":{"id":"a","dataset":"d","atoms":[],"length":2,"seed":1}}"#;
        let record = r#"{"kind":"rl","prompt":"p","unit_tests":["assert True"],"meta":{"id":"a","dataset":"d","atoms":[],"length":2,"seed":1}}"#;
        assert!(matches!(serde_json::from_str::<AnyRecord>(sample).unwrap(), AnyRecord::Sample(_)));
        assert!(matches!(serde_json::from_str::<AnyRecord>(record).unwrap(), AnyRecord::Record(_)));
    }
}
