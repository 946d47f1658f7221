use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dualstream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualstream"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dualstream(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A toy corpus plus a compact one-epoch config, both under a fresh directory.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(n_real: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        ok(&["synth", "--out-dir", s(&corpus), "--n-real", &n_real.to_string(), "--seed", "3"]);
        fs::write(
            dir.path().join("run.toml"),
            "out_dir = \"run\"\ncodec = \"none\"\n\n[data]\nmanifest = \"corpus/manifest.jsonl\"\n\n\
             [model]\nstage_channels = [16, 32, 64, 128]\n\n[train]\nbatch_size = 8\nmax_epochs = 1\n",
        )
        .unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn config(&self) -> PathBuf {
        self.path("run.toml")
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out_dir = self.path(out);
        let config = self.config();
        let mut args = vec!["train", "--config", s(&config), "--out-dir", s(&out_dir)];
        args.extend_from_slice(extra);
        ok(&args);
        out_dir
    }
}

#[test]
fn training_writes_checkpoints_log_and_snapshot() {
    let ws = Workspace::new(10);
    let run = ws.train("run", &["--seed", "7"]);
    for f in ["best.ckpt", "last.ckpt", "train_log.jsonl", "config.snapshot.toml", "splits.jsonl"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let snapshot = fs::read_to_string(run.join("config.snapshot.toml")).unwrap();
    assert!(snapshot.contains("seed = 7"));
}

#[test]
fn seeded_runs_are_reproducible() {
    let ws = Workspace::new(10);
    let a = ws.train("a", &["--seed", "7"]);
    let b = ws.train("b", &["--seed", "7"]);
    assert_eq!(
        fs::read(a.join("train_log.jsonl")).unwrap(),
        fs::read(b.join("train_log.jsonl")).unwrap()
    );
    assert_eq!(fs::read(a.join("last.ckpt")).unwrap(), fs::read(b.join("last.ckpt")).unwrap());
}

#[test]
fn ablation_is_recorded_in_the_snapshot() {
    let ws = Workspace::new(10);
    let run = ws.train("run", &["--ablate", "no-blend", "--ablate", "no-shuffle"]);
    let snapshot: toml::Value = fs::read_to_string(run.join("config.snapshot.toml")).unwrap().parse().unwrap();
    assert_eq!(snapshot["blend"]["enabled"].as_bool(), Some(false));
    assert_eq!(snapshot["ablation"]["shuffle"].as_bool(), Some(false));
    assert_eq!(snapshot["ablation"]["cls_s"].as_bool(), Some(true));
}

#[test]
fn evaluation_is_deterministic_and_cache_consistent() {
    let ws = Workspace::new(10);
    let run = ws.train("run", &["--seed", "5"]);
    let config = ws.config();
    let ckpt = run.join("best.ckpt");
    let eval = |out: &Path, extra: &[&str]| {
        let mut args = vec!["eval", "--config", s(&config), "--seed", "5", "--out-dir", s(out), "--checkpoint", s(&ckpt)];
        args.extend_from_slice(extra);
        ok(&args);
        (
            fs::read(out.join("scores.jsonl")).unwrap(),
            fs::read(out.join("report.json")).unwrap(),
        )
    };
    let first = eval(&ws.path("e1"), &[]);
    let second = eval(&ws.path("e2"), &[]);
    assert_eq!(first, second);

    ok(&["preprocess", "--config", s(&config), "--seed", "5", "--out-dir", s(&ws.path("pre"))]);
    let cache = ws.path("pre/cache");
    let cached = eval(&ws.path("e3"), &["--cache-dir", s(&cache)]);
    assert_eq!(first, cached);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let ws = Workspace::new(4);
    let config = ws.config();
    let out = dualstream(&["eval", "--config", s(&config), "--protocol", "sideways", "--checkpoint", "x.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sideways"));

    let bad = ws.path("bad.toml");
    fs::write(&bad, "[train]\nbatch_sise = 4\n").unwrap();
    let out = dualstream(&["train", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_sise"));

    let out = dualstream(&["train", "--config", s(&config), "--ablate", "no-everything"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(dualstream(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_two() {
    let ws = Workspace::new(4);
    let config = ws.config();
    let missing = ws.path("missing.ckpt");
    let out = dualstream(&["eval", "--config", s(&config), "--checkpoint", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

const DUMP_A: &str = r#"{"file_id":"r1","group":"MelGAN","label":1,"score":0.9}
{"file_id":"f1","group":"MelGAN","label":0,"score":0.1}
{"file_id":"r2","group":"MelGAN","label":1,"score":0.2}
{"file_id":"f2","group":"MelGAN","label":0,"score":0.3}
{"file_id":"r1","group":"PWG","label":1,"score":0.9}
{"file_id":"f3","group":"PWG","label":0,"score":0.1}
{"file_id":"r2","group":"PWG","label":1,"score":0.8}
{"file_id":"f4","group":"PWG","label":0,"score":0.2}
"#;

const DUMP_B: &str = r#"{"file_id":"r1","group":"MelGAN","label":1,"score":0.1}
{"file_id":"f1","group":"MelGAN","label":0,"score":0.9}
{"file_id":"r1","group":"PWG","label":1,"score":0.6}
{"file_id":"f3","group":"PWG","label":0,"score":0.4}
"#;

#[test]
fn report_merges_dumps_and_averages_groups() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    fs::write(&a, DUMP_A).unwrap();
    fs::write(&b, DUMP_B).unwrap();
    let out_dir = dir.path().join("out");
    let out = ok(&[
        "report", s(&a), s(&b), "--name", "ours", "--name", "baseline",
        "--protocol", "cross-method", "--out-dir", s(&out_dir), "--plots",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("ours")));
    assert!(table.lines().any(|l| l.starts_with("baseline")));

    let reports: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("comparison.json")).unwrap()).unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    let ours = &reports[0];
    let groups = ours["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    let aucs: Vec<f64> = groups.iter().map(|g| g["auc"].as_f64().unwrap()).collect();
    // MelGAN: three of four real/fake pairs ordered correctly; PWG: all four.
    assert_eq!(aucs, [0.75, 1.0]);
    let mean_auc = aucs.iter().sum::<f64>() / 2.0;
    assert!((ours["average_auc"].as_f64().unwrap() - mean_auc).abs() < 1e-12);
    let mean_eer = groups.iter().map(|g| g["eer"].as_f64().unwrap()).sum::<f64>() / 2.0;
    assert!((ours["average_eer"].as_f64().unwrap() - mean_eer).abs() < 1e-12);

    let svg = fs::read_to_string(out_dir.join("roc.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("ours/MelGAN"));
}
