//! Runs the `simtext` binary over a small synthetic corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use simtext::data::{synthetic_corpus, write_manifest, Canvas, SyntheticStyle};

pub const WORDS: [&str; 3] = ["CAT", "DOG", "SUN"];

/// Writes train/test/validation manifests under `root` from disjoint seeds.
pub fn write_corpus(root: &Path, per_label: usize) {
    for (name, seed) in [("train", 1u64), ("test", 2), ("val", 3)] {
        let samples = synthetic_corpus(&WORDS, per_label, &SyntheticStyle::default(), seed, Canvas::TEXT).unwrap();
        write_manifest(&root.join(name), &samples).unwrap();
    }
}

pub fn simtext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simtext"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> String {
    let out = simtext(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every subcommand except `serve`, in pipeline order, with relative paths.
pub fn steps(seed: &str) -> Vec<Vec<String>> {
    let s = |v: &[&str]| {
        let mut args = vec!["--seed".to_string(), seed.to_string()];
        args.extend(v.iter().map(|a| a.to_string()));
        args
    };
    vec![
        s(&["train", "--data", "train", "--epochs", "2", "--pairs-per-epoch", "60", "--out", "net.ckpt"]),
        s(&["embed", "--checkpoint", "net.ckpt", "--data", "train", "--out", "train.tsv"]),
        s(&["knn-build", "--embeddings", "train.tsv", "--out", "train.midx"]),
        s(&["eval-sim", "--checkpoint", "net.ckpt", "--pairs-from", "test", "--pairs", "200"]),
        s(&[
            "simulate", "--checkpoint", "net.ckpt", "--index", "train.midx", "--test", "test", "--oracle-error", "0.1",
            "--out-metrics", "metrics.json", "--out-audit", "audit.jsonl",
        ]),
        s(&["grid-search", "--checkpoint", "net.ckpt", "--index", "train.midx", "--validation", "val"]),
        s(&["cluster-eval", "--embeddings", "train.tsv", "--algo", "kmeans", "--out", "kmeans.json"]),
        s(&["cluster-eval", "--embeddings", "train.tsv", "--algo", "agglomerative"]),
        s(&["cluster-eval", "--embeddings", "train.tsv", "--algo", "dbscan"]),
    ]
}

pub const ARTIFACTS: [&str; 6] = ["net.ckpt", "train.tsv", "train.midx", "metrics.json", "audit.jsonl", "kmeans.json"];

/// Runs all steps in a fresh corpus directory and returns each step's
/// stdout followed by the bytes of every artifact.
pub fn run_pipeline(root: &Path, seed: &str) -> (Vec<String>, Vec<(String, Vec<u8>)>) {
    write_corpus(root, 8);
    let outputs = steps(seed)
        .iter()
        .map(|args| ok(root, &args.iter().map(String::as_str).collect::<Vec<_>>()))
        .collect();
    let artifacts = ARTIFACTS
        .iter()
        .map(|a| (a.to_string(), fs::read(root.join(a)).unwrap()))
        .collect();
    (outputs, artifacts)
}

pub fn tempdir() -> (tempfile::TempDir, PathBuf) {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().to_path_buf();
    (t, p)
}
