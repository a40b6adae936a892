//! End-to-end runs of the `causalkg` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use causalkg::synthetic::{mediator_corpus, MediatorCorpusConfig};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_causalkg"));
    c.env("CAUSALKG_THREADS", "2");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const CONFIG: &str = r#"{
  "seed": 3,
  "model": {"dim": 8},
  "train": {"epochs": 4, "batch_size": 64, "eval_every": 2}
}"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let corpus = mediator_corpus(&MediatorCorpusConfig {
        networks: 20,
        seed: 1,
        ..Default::default()
    });
    fs::write(dir.path().join("corpus.json"), serde_json::to_vec(&corpus).unwrap()).unwrap();
    fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    dir
}

/// Runs every stage; returns the prediction report bytes.
fn pipeline(dir: &Path, model: &str) -> Vec<u8> {
    fn with<'a>(extra: &[&'a str]) -> Vec<&'a str> {
        [&["--config", "run.json"][..], extra].concat()
    }
    ok(dir, &with(&["preprocess", "--in", "corpus.json", "--out", "nets", "--report", "rep.json"]));
    ok(dir, &with(&["build-kg", "--networks", "nets", "--out", "kg.ckg", "--variant", "CT", "--mediated"]));
    ok(dir, &with(&["split", "--kg", "kg.ckg", "--out", "splits", "--ratios", "0.8,0.1,0.1", "--seed", "5"]));
    ok(dir, &with(&["train", "--split", "splits", "--model", model, "--out", "m.ckpt", "--history", "h.jsonl"]));
    ok(dir, &with(&[
        "evaluate", "--checkpoint", "m.ckpt", "--kg", "kg.ckg", "--split", "splits", "--task", "prediction",
        "--out", "pred.json",
    ]));
    fs::read(dir.join("pred.json")).unwrap()
}

#[test]
fn full_pipeline_writes_headed_artifacts() {
    let dir = workspace();
    let d = dir.path();
    let report: serde_json::Value = serde_json::from_slice(&pipeline(d, "hyper")).unwrap();
    assert_eq!(report["header"]["tool"], "causalkg");
    assert_eq!(report["header"]["config_digest"].as_str().unwrap().len(), 64);
    assert_eq!(report["report"]["task"], "prediction");
    let mrr = report["report"]["mrr"].as_f64().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0);

    let nets: serde_json::Value = serde_json::from_slice(&fs::read(d.join("nets/networks.json")).unwrap()).unwrap();
    assert_eq!(nets["header"]["command"], "preprocess");
    assert_eq!(nets["cegs"].as_array().unwrap().len(), 20);
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(d.join("rep.json")).unwrap()).unwrap();
    assert_eq!(rep["summary"]["accepted"], 20);

    let kg = fs::read_to_string(d.join("kg.ckg")).unwrap();
    assert!(kg.starts_with("#causalkg v1\n#variant CT\n#mediated true\n#generator causalkg "));
    for part in ["train", "valid", "test"] {
        let text = fs::read_to_string(d.join(format!("splits/{part}.ckg"))).unwrap();
        assert!(text.lines().nth(3).unwrap().starts_with("#generator causalkg"));
    }
    let history = fs::read_to_string(d.join("h.jsonl")).unwrap();
    let mut lines = history.lines();
    assert!(lines.next().unwrap().contains("\"header\""));
    assert_eq!(lines.count(), 4);
    assert!(!d.join("splits/.causalkg.lock").exists());

    let stats: serde_json::Value = serde_json::from_str(&ok(d, &["stats", "--kg", "splits"])).unwrap();
    assert!(stats["train"]["links"].as_u64().unwrap() > stats["test"]["links"].as_u64().unwrap());

    let explain = ok(d, &["--config", "run.json", "evaluate", "--checkpoint", "m.ckpt", "--split", "splits",
        "--task", "explanation", "--filter", "paper-literal", "--candidates", "types"]);
    let explain: serde_json::Value = serde_json::from_str(&explain).unwrap();
    assert_eq!(explain["report"]["filter_mode"], "paper-literal");
}

#[test]
fn predict_lists_top_candidates() {
    let dir = workspace();
    let d = dir.path();
    pipeline(d, "hyper");
    let out = ok(d, &[
        "predict", "--checkpoint", "m.ckpt", "--split", "splits", "--anchor", "net000/a",
        "--qualifiers", "hasMediator=net000/b0,hasMediatorType=type/M0", "--n", "3",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let cands = v["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 3);
    assert_eq!(v["relation"], "causesType");
    let scores: Vec<f64> = cands.iter().map(|c| c["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let types = ok(d, &[
        "explain", "--checkpoint", "m.ckpt", "--split", "splits", "--anchor", "net000/c0", "--candidates", "types",
    ]);
    let v: serde_json::Value = serde_json::from_str(&types).unwrap();
    for c in v["candidates"].as_array().unwrap() {
        assert!(c["entity"].as_str().unwrap().starts_with("type/"));
    }

    let bad = run(d, &["predict", "--checkpoint", "m.ckpt", "--split", "splits", "--anchor", "nowhere/x"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn identical_runs_give_identical_reports() {
    let a = workspace();
    let b = workspace();
    for model in ["hyper", "transe"] {
        assert_eq!(pipeline(a.path(), model), pipeline(b.path(), model), "{model}");
        assert_eq!(
            fs::read(a.path().join("m.ckpt")).unwrap(),
            fs::read(b.path().join("m.ckpt")).unwrap()
        );
        assert_eq!(fs::read(a.path().join("kg.ckg")).unwrap(), fs::read(b.path().join("kg.ckg")).unwrap());
    }
}

#[test]
fn config_typo_is_a_validation_error_naming_the_key() {
    let dir = workspace();
    fs::write(dir.path().join("bad.json"), r#"{"train": {"epochz": 3}}"#).unwrap();
    let out = run(dir.path(), &["--config", "bad.json", "stats", "--kg", "x.ckg"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epochz") && err.contains("train"), "{err}");

    fs::write(dir.path().join("ratios.json"), r#"{"ratios": {"train": 0.9, "valid": 0.1, "test": 0.1}}"#).unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "ratios.json", "stats", "--kg", "x.ckg"])), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["split", "--bogus"], &[]] {
        let out = run(dir.path(), args);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["preprocess", "--in", "absent.json", "--out", "nets"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&run(dir.path(), &["--config", "absent.json", "stats"])), 2);
}

#[test]
fn locked_output_directory_exits_two() {
    let dir = workspace();
    fs::create_dir(dir.path().join("nets")).unwrap();
    fs::write(dir.path().join("nets/.causalkg.lock"), "1\n").unwrap();
    let out = run(dir.path(), &["preprocess", "--in", "corpus.json", "--out", "nets"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    assert!(!dir.path().join("nets/networks.json").exists());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = workspace();
    let d = dir.path();
    pipeline(d, "transe");
    let path: PathBuf = d.join("m.ckpt");
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    fs::write(&path, bytes).unwrap();
    let out = run(d, &["evaluate", "--checkpoint", "m.ckpt", "--split", "splits"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn diverging_training_exits_three() {
    let dir = workspace();
    let d = dir.path();
    pipeline(d, "transe");
    fs::write(d.join("wild.json"), r#"{"model": {"kind": "distmult"}, "train": {"lr": 1e200, "epochs": 3}}"#).unwrap();
    let out = run(d, &["--config", "wild.json", "train", "--split", "splits", "--out", "wild.ckpt"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("wild.ckpt").exists());
}

#[test]
fn grad_check_reports_error_for_every_model() {
    let dir = tempfile::tempdir().unwrap();
    for model in ["transe", "distmult", "hole", "complex", "hyper"] {
        let out = ok(dir.path(), &["grad-check", "--model", model, "--seed", "7"]);
        let err: f64 = out.trim().rsplit(' ').next().unwrap().parse().unwrap();
        assert!(err < 1e-4, "{model}: {out}");
    }
}
