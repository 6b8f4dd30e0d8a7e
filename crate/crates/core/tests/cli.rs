mod common;

use std::path::Path;
use std::process::{Command, Output};

fn semsin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsin")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn check_and_gradcheck_pass_on_fixtures() {
    let out = semsin(&["check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["roundtrip_failures"].as_array().unwrap().len(), 0);

    let out = semsin(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0));
    let last = String::from_utf8(out.stdout).unwrap().lines().last().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&last).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = semsin(&["train", "--data", "x.jsonl", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "UsageError");
    assert_eq!(semsin(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(semsin(&["xval", "--data", "x", "--seed", "1", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(semsin(&["synth", "--docs", "5", "--seed", "1", "--out", "x"]).status.code(), Some(2));
    assert_eq!(semsin(&["gradcheck", "--eps", "0"]).status.code(), Some(2));
    assert_eq!(semsin(&["--help"]).status.code(), Some(0));
}

#[test]
fn failures_exit_1_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = semsin(&["check", "--data", p(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"], "DataError");
    assert!(err["message"].as_str().unwrap().contains("missing.jsonl"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"doc_id\": 3}\n").unwrap();
    let out = semsin(&["check", "--data", p(&bad), "--fail-fast"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "SchemaViolation");

    let data = dir.path().join("syn.jsonl");
    assert_eq!(semsin(&["synth", "--docs", "20", "--seed", "2", "--out", p(&data)]).status.code(), Some(0));
    let out = semsin(&["xval", "--data", p(&data), "--seed", "1", "--k", "19", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "TooFewTopics");

    let emb = dir.path().join("e.ctxemb");
    std::fs::write(&emb, b"NOTEMB").unwrap();
    let out = semsin(&["train", "--data", p(&data), "--embeddings", p(&emb), "--seed", "1", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "BadMagic");
}

#[test]
fn train_eval_predict_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("syn.jsonl");
    assert_eq!(semsin(&["synth", "--docs", "24", "--seed", "5", "--out", p(&data)]).status.code(), Some(0));
    assert!(dir.path().join("syn.truth.jsonl").exists());
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = semsin(&[
            "train", "--data", p(&data), "--seed", "3", "--epochs", "3", "--dim", "8", "--out", p(&out_dir),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let snap = common::snapshot(&a);
    for f in ["model.json", "model.ckpt", "train_report.jsonl", "train_config.json", "metrics.json"] {
        assert!(snap.contains_key(f), "{f} missing");
    }
    assert_eq!(snap, common::snapshot(&b));

    let preds = dir.path().join("preds.jsonl");
    let out = semsin(&["predict", "--data", p(&data), "--model", p(&a), "--out", p(&preds)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&preds).unwrap();
    let n_pairs = std::fs::read_to_string(dir.path().join("syn.truth.jsonl")).unwrap().lines().count();
    assert_eq!(text.lines().count(), n_pairs);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let pc = v["p_causal"].as_f64().unwrap();
        assert_eq!(v["prediction"].as_u64().unwrap(), u64::from(pc > 0.5));
    }
    let out = semsin(&["eval", "--data", p(&data), "--model", p(&a)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("F1"));
}

#[test]
fn xval_writes_fold_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("syn.jsonl");
    semsin(&["synth", "--docs", "30", "--seed", "9", "--out", p(&data)]);
    let out_dir = dir.path().join("cv");
    let out = semsin(&[
        "xval", "--data", p(&data), "--seed", "1", "--mode", "random", "--k", "3", "--epochs", "2", "--dim", "8",
        "--jobs", "2", "--out", p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snap = common::snapshot(&out_dir);
    for f in 0..3 {
        assert!(snap.contains_key(&format!("fold-{f}/model.ckpt")));
        assert!(snap.contains_key(&format!("fold-{f}/train_report.jsonl")));
    }
    let metrics: serde_json::Value = serde_json::from_slice(&snap["metrics.json"]).unwrap();
    assert_eq!(metrics["folds"].as_array().unwrap().len(), 3);
    assert!(String::from_utf8(out.stdout).unwrap().contains("SemSIn (full)"));
}
