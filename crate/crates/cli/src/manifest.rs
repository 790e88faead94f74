//! Reproducibility manifests: the exact job that ran, its seeds, a hash of
//! the job, the tool version and a digest of every output file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::jobs::{Job, Outcome};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CHAINSYNTH_GIT_DESCRIBE"), ")");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// sha256 of the job's JSON encoding.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub interpreter: String,
    pub job: Job,
    /// Output path to sha256 of its contents.
    pub outputs: BTreeMap<PathBuf, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(job: &Job) -> String {
    sha256_hex(&serde_json::to_vec(job).expect("serializable"))
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(CliError::io(path))?))
}

impl Manifest {
    pub fn new(job: &Job, outcome: &Outcome) -> Result<Manifest, CliError> {
        let mut outputs = BTreeMap::new();
        for p in &outcome.outputs {
            outputs.insert(p.clone(), digest_file(p)?);
        }
        let interpreter = chainsynth::sandbox::Sandbox::from_env().interpreter().display().to_string();
        Ok(Manifest {
            tool: "chainsynth".into(),
            version: VERSION.into(),
            config_hash: config_hash(job),
            seeds: outcome.seeds.clone(),
            interpreter,
            job: job.clone(),
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("serializable");
        text.push('\n');
        std::fs::write(path, text).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.into(), msg: e.to_string() })
    }

    /// Checks that every recorded output still has its recorded digest.
    pub fn verify_outputs(&self) -> Result<(), CliError> {
        for (path, want) in &self.outputs {
            let got = digest_file(path)?;
            if &got != want {
                return Err(CliError::ReplayMismatch(path.display().to_string()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jobs::PartitionJob;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn config_hash_tracks_the_job() {
        let a = Job::Partition(PartitionJob::default());
        let b = Job::Partition(PartitionJob { seed: 1, ..PartitionJob::default() });
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn manifest_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.json");
        std::fs::write(&out, "{}").unwrap();
        let job = Job::Partition(PartitionJob { out: out.clone(), ..PartitionJob::default() });
        let m = Manifest::new(&job, &Outcome { outputs: vec![out.clone()], seeds: BTreeMap::new() }).unwrap();
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(back, m);
        back.verify_outputs().unwrap();
        std::fs::write(&out, "[]").unwrap();
        assert!(matches!(back.verify_outputs(), Err(CliError::ReplayMismatch(_))));
    }
}
