//! Drives the `bowmotion` binary through synth, prepare, train, generate
//! and evaluate on a small synthetic corpus.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const CONFIG: &str = r#"
val_fraction = 0.2

[prepare]
segment_len = 32

[model]
d_model = 8
n_heads = 2
d_ff = 16
n_unet_levels = 2
n_blocks = 1
lstm_dim = 8
max_rel_dist = 8

[train]
warmup = 10
batch_size = 4
max_epochs = 2

[synth]
n_pieces = 3
frames_per_piece = 240
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bowmotion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fail(args: &[&str]) -> String {
    let out = bin(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Relative path -> SHA-256 of every file under `root`.
fn tree_hashes(root: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let digest = Sha256::digest(fs::read(&p).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), hex);
            }
        }
    }
    out
}

struct Project {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: String,
}

impl Project {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let config = root.join("project.toml");
        let text = format!(
            "dataset = {:?}\nout = {:?}\n{CONFIG}",
            root.join("data"),
            root.join("runs")
        );
        fs::write(&config, text).unwrap();
        Self {
            _tmp: tmp,
            config: config.to_string_lossy().into_owned(),
            root,
        }
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).to_string_lossy().into_owned()
    }
}

#[test]
fn full_pipeline_and_identity_evaluation() {
    let p = Project::new();
    let c = p.config.as_str();
    ok(&["synth", "--config", c]);
    let out = ok(&["prepare", "--config", c]);
    assert!(out.contains("prepared 3 pieces"), "{out}");
    let folds: Vec<_> = fs::read_dir(p.root.join("runs/prepared/folds")).unwrap().collect();
    assert_eq!(folds.len(), 3);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(p.root.join("runs/prepared/manifest.json")).unwrap()).unwrap();
    for piece in manifest["pieces"].as_array().unwrap() {
        for s in piece["segments"].as_array().unwrap() {
            assert_eq!(s["piece_id"], piece["id"]);
            assert!(s["start_frame"].is_u64());
        }
    }

    ok(&["train", "--config", c, "--fold", "1"]);
    let model = p.path("runs/train/fold_01/model.bgw");
    let log = fs::read_to_string(p.root.join("runs/train/fold_01/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "train_loss", "val_loss", "lr", "wall_time"] {
            assert!(rec.get(key).is_some(), "log line lacks {key}: {line}");
        }
    }

    let gen = p.path("gen");
    ok(&["generate", "--config", c, "--checkpoint", &model, "--out", &gen, &p.path("data/piece01")]);
    assert!(p.root.join("gen/piece01.csv").is_file());
    assert!(p.root.join("gen/piece01.json").is_file());

    let gen_speed = p.path("gen_speed");
    ok(&[
        "generate", "--config", c, "--checkpoint", &model, "--speed", "1.0", "--out", &gen_speed,
        &p.path("data/piece01"),
    ]);
    assert_eq!(tree_hashes(Path::new(&gen)), tree_hashes(Path::new(&gen_speed)));

    let eval = p.path("eval_identity");
    ok(&["evaluate", "--config", c, "--pred", &gen, "--gt", &gen, "--out", &eval]);
    let report = fs::read_to_string(p.root.join("eval_identity/report.csv")).unwrap();
    let mean = report.lines().find(|l| l.starts_with("mean,")).unwrap();
    let v: Vec<f64> = mean.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
    assert_eq!(v[0], 0.0, "l1");
    assert_eq!(v[1], 0.0, "hand l1");
    assert_eq!(v[6], 1.0, "bow avg");

    let sweep = p.path("sweep");
    ok(&[
        "evaluate", "--config", c, "--checkpoint", &model, "--data", &p.path("runs/prepared"), "--piece",
        "piece01", "--sweep", "--out", &sweep,
    ]);
    let table = fs::read_to_string(p.root.join("sweep/speed_sweep.csv")).unwrap();
    let labels: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["0.5x", "0.75x", "1x", "1.5x", "2x"]);

    let mut wrong = fs::read_to_string(c).unwrap();
    wrong = wrong.replace("n_heads = 2", "n_heads = 4");
    let wrong_cfg = p.path("wrong.toml");
    fs::write(&wrong_cfg, wrong).unwrap();
    let err = fail(&["generate", "--config", &wrong_cfg, "--checkpoint", &model, &p.path("data/piece01")]);
    assert!(err.contains("model.n_heads"), "{err}");
}

#[test]
fn prepare_is_byte_identical_across_runs() {
    let p = Project::new();
    let c = p.config.as_str();
    ok(&["synth", "--config", c]);
    ok(&["prepare", "--config", c, "--out", &p.path("a")]);
    ok(&["prepare", "--config", c, "--out", &p.path("b")]);
    let (a, b) = (tree_hashes(&p.root.join("a")), tree_hashes(&p.root.join("b")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn synth_is_reproducible_and_seeded() {
    let p = Project::new();
    let c = p.config.as_str();
    ok(&["synth", "--config", c, "--out", &p.path("s1")]);
    ok(&["synth", "--config", c, "--out", &p.path("s2")]);
    ok(&["synth", "--config", c, "--out", &p.path("s3"), "--seed", "9"]);
    let h1 = tree_hashes(&p.root.join("s1"));
    assert_eq!(h1, tree_hashes(&p.root.join("s2")));
    assert_ne!(h1, tree_hashes(&p.root.join("s3")));
}

#[test]
fn prepare_reports_every_failing_piece() {
    let p = Project::new();
    let c = p.config.as_str();
    ok(&["synth", "--config", c]);
    fs::remove_file(p.root.join("data/piece00/beats.txt")).unwrap();
    fs::remove_file(p.root.join("data/piece02/audio.wav")).unwrap();
    let err = fail(&["prepare", "--config", c]);
    assert!(err.contains("2 of 3 pieces failed"), "{err}");
    assert!(err.contains("piece00") && err.contains("piece02"), "{err}");
    assert!(!p.root.join("runs/prepared/manifest.json").exists());
}

#[test]
fn prepare_rejects_length_mismatch() {
    let p = Project::new();
    let c = p.config.as_str();
    ok(&["synth", "--config", c]);
    let csv = p.root.join("data/piece01/skeleton.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let kept: Vec<&str> = text.lines().take(text.lines().count() - 5).collect();
    fs::write(&csv, kept.join("\n") + "\n").unwrap();
    let err = fail(&["prepare", "--config", c]);
    assert!(err.contains("piece01") && err.contains("frames"), "{err}");
}

#[test]
fn short_piece_gives_no_segments_and_a_warning() {
    let p = Project::new();
    let c = p.config.as_str();
    ok(&["synth", "--config", c, "--n-pieces", "2", "--frames", "240"]);
    let out = ok(&["prepare", "--config", c, "--segment-len", "900"]);
    assert!(out.contains("0 segments"), "{out}");
    assert!(out.contains("warning: piece00: no segments"), "{out}");
}

#[test]
fn missing_dataset_is_an_error() {
    let p = Project::new();
    let err = fail(&["prepare", "--config", &p.config, "--dataset", &p.path("nowhere")]);
    assert!(err.contains("does not exist"), "{err}");
}
