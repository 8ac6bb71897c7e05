#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stresswatch::corpus::{write_labeled_csv, write_posts_jsonl, LabeledPost, Post};
use stresswatch::features::FeatureConfig;
use stresswatch::ingest::synth_generate;
use stresswatch::models::{fit_artifact, HyperParams, ModelArtifact, ModelKind};

/// Small embedding so fixtures train in well under a second.
pub fn small_features() -> FeatureConfig {
    let mut f = FeatureConfig::default();
    f.w2v.dim = 16;
    f.w2v.epochs = 3;
    f.w2v.min_count = 1;
    f
}

pub fn fixture_model(kind: ModelKind) -> ModelArtifact {
    let data = synth_generate(300, 11, 0.5);
    fit_artifact(&data, kind, &small_features(), &HyperParams::default().with_seed(11), 0).unwrap()
}

pub fn posts(n: usize, seed: u64) -> Vec<Post> {
    synth_generate(n, seed, 0.5).into_iter().map(|lp| lp.post).collect()
}

pub fn write_jsonl(path: &Path, posts: &[Post]) {
    write_posts_jsonl(std::fs::File::create(path).unwrap(), posts).unwrap();
}

pub fn write_csv(path: &Path, data: &[LabeledPost]) {
    write_labeled_csv(std::fs::File::create(path).unwrap(), data).unwrap();
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stresswatch"))
}

/// Runs the CLI binary in `dir` with no inherited `STRESSWATCH_*` overrides.
pub fn run_bin(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("STRESSWATCH_") {
            cmd.env_remove(k);
        }
    }
    cmd.output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
