use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chainsynth::dataset::{emit_records, load_records, DatasetRecord, RecordMeta};

fn corpus() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))
}

fn chainsynth(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainsynth")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn records(dataset: &str, n: usize) -> Vec<DatasetRecord> {
    (0..n)
        .map(|i| {
            let meta = RecordMeta {
                id: format!("{dataset}-{i}"),
                dataset: dataset.into(),
                atoms: vec![format!("atom_{i}")],
                length: 1,
                seed: i as u64,
            };
            DatasetRecord::sft(format!("prompt {dataset} {i}"), format!("def f():\n    return {i}\n"), meta)
        })
        .collect()
}

fn compose(dir: &Path) -> Output {
    let corpus = corpus();
    let args = ["compose", "--corpus", corpus.to_str().unwrap(), "--counts", "6,6,3", "--seed", "11", "--workers", "1"];
    chainsynth(&[&args[..], &["--out", "out"]].concat(), dir)
}

#[test]
fn compose_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&compose(a.path()));
    ok(&compose(b.path()));
    let files = ["partition.json", "atom_base.jsonl", "composite_a.jsonl", "composite_b.jsonl", "composite_c.jsonl"];
    for f in files {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        let y = std::fs::read(b.path().join("out").join(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert!(x == y, "{f} differs between runs");
    }
    let c: Vec<serde_json::Value> = std::fs::read_to_string(a.path().join("out/composite_c.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(c.len(), 3);
    assert!(a.path().join("out/manifest.json").exists());

    let replay = chainsynth(&["replay", "out/manifest.json", "--verify"], a.path());
    ok(&replay);
    assert!(String::from_utf8_lossy(&replay.stderr).contains("replay verified"));
}

#[test]
fn mix_resamples_to_the_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    emit_records(&records("composite_a", 5000), dir.path().join("composite_a.jsonl")).unwrap();
    emit_records(&records("atom_base", 100), dir.path().join("atom_base.jsonl")).unwrap();
    let out = chainsynth(
        &[
            "mix",
            "--spec",
            "composite_a=1%,atom_base=600%",
            "--input",
            "composite_a.jsonl",
            "--input",
            "atom_base=atom_base.jsonl",
            "--seed",
            "3",
            "--out",
            "mix.jsonl",
        ],
        dir.path(),
    );
    ok(&out);
    let mixed: Vec<DatasetRecord> = load_records(dir.path().join("mix.jsonl")).unwrap();
    assert_eq!(mixed.len(), 650);
    let from_base = mixed.iter().filter(|r| r.meta.dataset == "atom_base").count();
    assert_eq!(from_base, 600);
    assert!(dir.path().join("mix.jsonl.manifest.json").exists());
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "[partition]\nseed = 5\nout = \"from_config.json\"\n").unwrap();
    let corpus = corpus();
    let out = chainsynth(
        &[
            "--config",
            "run.toml",
            "partition",
            "--corpus",
            corpus.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            "flag.json",
        ],
        dir.path(),
    );
    ok(&out);
    assert!(dir.path().join("from_config.json").exists());
    assert!(!dir.path().join("flag.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("from_config.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["job"]["seed"], 5);
    assert_eq!(manifest["seeds"]["partition"], 5);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = chainsynth(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = chainsynth(&["compose", "--lengths", "1,2", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = chainsynth(&["stats", "missing.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
