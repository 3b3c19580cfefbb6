use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn emgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emgnn"))
        .args(args)
        .env_remove("EMGNN_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("toy.json");
        let o = emgnn(&["gen-synthetic", "--out", s(&data), "--dialogs", "12", "--rounds", "3", "--k-options", "6"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        Fixture { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let out = self.path(out);
        let mut args = vec!["train", "--data", s(&self.data), "--out", s(&out)];
        args.extend_from_slice(&["--dim", "6", "--fc-dim", "4", "--epochs", "2", "--batch-size", "4", "--k-options", "6"]);
        args.extend_from_slice(extra);
        emgnn(&args)
    }
}

#[test]
fn train_writes_checkpoint_and_log() {
    let f = Fixture::new();
    let o = f.train("m.ckpt", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = std::fs::read(f.path("m.ckpt")).unwrap();
    assert_eq!(&bytes[..6], b"EMGNN1");
    emgnn::checkpoint::from_bytes(&bytes).unwrap();
    let log = std::fs::read_to_string(f.path("m.ckpt.metrics.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[2]["epoch"], 2);
    assert!(lines[2]["val"]["mrr"].is_number());
}

#[test]
fn config_file_errors_name_the_key() {
    let f = Fixture::new();
    let mut cfg: serde_json::Value = serde_json::from_str(&emgnn::RunConfig::default().to_json()).unwrap();
    cfg.as_object_mut().unwrap().remove("inner_steps");
    let path = f.path("cfg.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = f.train("m.ckpt", &["--config", s(&path)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("inner_steps"), "{}", stderr(&o));
    assert!(!f.path("m.ckpt").exists());

    cfg["inner_steps"] = 2.into();
    cfg["inner_step"] = 2.into();
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = f.train("m.ckpt", &["--config", s(&path)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("inner_step"), "{}", stderr(&o));
}

#[test]
fn training_is_byte_deterministic() {
    let f = Fixture::new();
    for name in ["a.ckpt", "b.ckpt"] {
        assert_eq!(code(&f.train(name, &["--seed", "7"])), 0);
    }
    let a = std::fs::read(f.path("a.ckpt")).unwrap();
    assert_eq!(a, std::fs::read(f.path("b.ckpt")).unwrap());

    let o = Command::new(env!("CARGO_BIN_EXE_emgnn"))
        .args(["train", "--data", s(&f.data), "--out", s(&f.path("c.ckpt"))])
        .args(["--dim", "6", "--fc-dim", "4", "--epochs", "2", "--batch-size", "4", "--k-options", "6"])
        .env("EMGNN_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(a, std::fs::read(f.path("c.ckpt")).unwrap());
}

#[test]
fn eval_report_schema_and_integrity() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.ckpt", &[])), 0);
    let report = f.path("r.json");
    let o = emgnn(&["eval", "--ckpt", s(&f.path("m.ckpt")), "--data", s(&f.data), "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    keys.sort();
    assert_eq!(
        keys,
        ["mean_rank", "mrr", "n_examples", "ndcg", "per_round", "r_at_1", "r_at_10", "r_at_5"]
    );
    assert_eq!(v["n_examples"], 36);
    assert_eq!(v["per_round"].as_object().unwrap().len(), 3);

    let mut bytes = std::fs::read(f.path("m.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    std::fs::write(f.path("bad.ckpt"), bytes).unwrap();
    let bad_report = f.path("bad.json");
    let o = emgnn(&["eval", "--ckpt", s(&f.path("bad.ckpt")), "--data", s(&f.data), "--report", s(&bad_report)]);
    assert_eq!(code(&o), 3);
    assert!(!bad_report.exists());
}

#[test]
fn eval_with_oracles() {
    let f = Fixture::new();
    let report = f.path("r.json");
    let o = emgnn(&["eval", "--oracle", "generator", "--data", s(&f.data), "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["r_at_1"], 1.0);
    let o = emgnn(&["eval", "--oracle", "psychic", "--data", s(&f.data), "--report", s(&report)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn infer_exports_structure() {
    let f = Fixture::new();
    assert_eq!(code(&f.train("m.ckpt", &[])), 0);
    let ckpt = f.path("m.ckpt");
    let infer = |out: &Path| emgnn(&["infer", "--ckpt", s(&ckpt), "--data", s(&f.data), "--dialog", "1", "--round", "3", "--export-structure", s(out)]);

    let dot = f.path("g.dot");
    let o = infer(&dot);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.contains("p=")).count(), 6);
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.trim_start().starts_with("digraph") && text.trim_end().ends_with('}'));
    assert_eq!(text.lines().filter(|l| l.contains("[label=")).count(), 4);
    assert_eq!(text.matches(" -> ").count(), 12);

    let json = f.path("g.json");
    assert_eq!(code(&infer(&json)), 0);
    let first = std::fs::read(&json).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 4);
    for row in v["normalized"].as_array().unwrap() {
        let total: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
    assert_eq!(code(&infer(&json)), 0);
    assert_eq!(std::fs::read(&json).unwrap(), first);

    let o = emgnn(&["infer", "--ckpt", s(&ckpt), "--data", s(&f.data), "--dialog", "99", "--round", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_exit_codes() {
    let o = emgnn(&["verify", "--suite", "mrf"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("mrf.bp_trees"));
    assert_eq!(code(&emgnn(&["verify", "--suite", "everything"])), 2);
}

#[test]
fn help_lists_flags_with_defaults() {
    let o = emgnn(&["train", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--dim", "--fc-dim", "--outer-iters", "--inner-steps", "--variant", "--batch-size", "--lr-base", "--lr-floor", "--epochs", "--seed", "--k-options", "--mode"] {
        assert!(text.contains(flag), "missing {flag}");
    }
    assert!(text.contains("[default: 32]") && text.contains("[default: 0.001]"));
    for cmd in ["eval", "infer", "verify", "gen-synthetic", "ablate", "structure"] {
        assert_eq!(code(&emgnn(&[cmd, "--help"])), 0);
    }
}

#[test]
fn generator_limits_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    assert_eq!(code(&emgnn(&["gen-synthetic", "--out", s(&out), "--entities", "999"])), 2);
    assert_eq!(code(&emgnn(&["gen-synthetic", "--out", s(&out), "--rounds", "40"])), 2);
    assert!(!out.exists());
}
