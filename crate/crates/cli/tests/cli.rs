use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn arena(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arena")).current_dir(dir).env("RUST_LOG", "error").args(args).output().unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_json(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap()
}

#[test]
fn solve_nim_and_chomp() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&arena(dir.path(), &["solve", "--game", "nim", "--piles", "3,4,5"]));
    assert_eq!(v["grundy"], 2);
    assert_eq!(v["nim_sum"], 2);
    assert_eq!(v["label"], "win");
    assert_eq!(v["optimal_text"], serde_json::json!(["take 2 from pile 0"]));

    let v = ok_json(&arena(dir.path(), &["solve", "--game", "chomp", "--grid", "2x3"]));
    assert_eq!(v["convention"], "poison");
    let moves = v["optimal"]["moves"].as_array().unwrap();
    assert_eq!(moves.len(), 1);
    assert_eq!((moves[0]["row"].as_u64(), moves[0]["col"].as_u64()), (Some(1), Some(2)));

    let v = ok_json(&arena(dir.path(), &["solve", "--state", r#"{"game":"kayles","rows":["111"]}"#]));
    assert_eq!(v["grundy"], 3);
}

#[test]
fn simulate_oracle_beats_random() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--preset", "nim-normal", "--agent", "oracle", "--opponent", "random", "--episodes", "50", "--seed",
        "7", "--out", "run",
    ];
    let v = ok_json(&arena(dir.path(), &args));
    assert_eq!(v["win_rate"], 1.0);
    assert_eq!(v["n"], 50);
    let run = dir.path().join("run");
    for f in ["episodes.jsonl", "transcripts.jsonl", "report.json", "win_rates.csv", "manifest.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(run.join("episodes.jsonl")).unwrap().lines().count(), 50);
}

#[test]
fn dataset_gen_then_oracle_eval() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&arena(dir.path(), &["dataset-gen", "--out", "ds"]));
    assert_eq!(v["counts"], serde_json::json!({"nim": 20, "fibonacci": 11, "kayles": 18, "chomp": 20}));
    let again = ok_json(&arena(dir.path(), &["dataset-gen", "--out", "ds2"]));
    assert_eq!(v["dataset_hash"], again["dataset_hash"]);

    let v = ok_json(&arena(dir.path(), &["dataset-eval", "--agent", "oracle", "--dataset", "ds/dataset.jsonl", "--out", "ev"]));
    for g in ["nim", "fibonacci", "kayles", "chomp"] {
        assert_eq!(v["accuracy"][g]["mean"], 1.0, "{g}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ev/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["dataset_hash"], again["dataset_hash"]);

    let r = ok_json(&arena(dir.path(), &["report", "ev", "--out", "agg"]));
    assert_eq!(r["n_accuracy_reports"], 1);
    assert!(dir.path().join("agg/accuracy.csv").is_file());
}

#[test]
fn recorded_run_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("eval.json"),
        r#"{"dataset": {"nim": 5, "fibonacci": 2, "kayles": 2, "chomp": 2}, "agent": {"type": "llm", "kind": "react"}, "n_repeats": 2, "seed": 3}"#,
    )
    .unwrap();
    let replies: Vec<&str> = vec!["```json\n{\"action\": 1}\n```"; 500];
    std::fs::write(p.join("script.json"), serde_json::to_string(&replies).unwrap()).unwrap();

    let base = ["dataset-eval", "--config", "eval.json"];
    let rec = [&base[..], &["--backend", "record", "--script", "script.json", "--fixtures", "fx", "--out", "rec"]].concat();
    ok_json(&arena(p, &rec));
    for out in ["a", "b"] {
        ok_json(&arena(p, &[&base[..], &["--backend", "replay", "--fixtures", "fx", "--out", out]].concat()));
    }
    let read = |d: &str| std::fs::read_to_string(p.join(d).join("report.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("rec"), read("a"));
}

#[test]
fn bias_analyze_on_scripted_debates() {
    let dir = tempfile::tempdir().unwrap();
    let replies: Vec<&str> = vec!["```json\n{\"action\": 1}\n```"; 1000];
    std::fs::write(dir.path().join("script.json"), serde_json::to_string(&replies).unwrap()).unwrap();
    let v = ok_json(&arena(dir.path(), &["bias-analyze", "--backend", "scripted", "--script", "script.json", "--out", "b"]));
    assert_eq!(v["pre_mode"], "take 1");
    assert_eq!(v["pre_flagged"], true);
    assert_eq!(v["delta_mode"], 0.0);
    let logs = dir.path().join("b/debate_logs.jsonl");
    assert_eq!(std::fs::read_to_string(&logs).unwrap().lines().count(), 20);
    // Re-analysing the saved logs needs no backend.
    let again = ok_json(&arena(dir.path(), &["bias-analyze", "--logs", "b/debate_logs.jsonl", "--out", "b2"]));
    assert_eq!(again["pre_mode_frequency"], v["pre_mode_frequency"]);
}

#[test]
fn errors_are_json_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let e = err_json(&arena(dir.path(), &["simulate", "--preset", "nope", "--agent", "random", "--opponent", "random"]), 1);
    assert_eq!(e["error"], "failed");
    assert!(e["message"].as_str().unwrap().contains("nim-normal"));

    let e = err_json(&arena(dir.path(), &["dataset-eval", "--agent", "react", "--backend", "replay", "--fixtures", "missing"]), 1);
    assert!(e["message"].as_str().unwrap().contains("missing"));

    let e = err_json(&arena(dir.path(), &["simulate", "--config", "x.json", "--episodes", "3"]), 2);
    assert_eq!(e["error"], "usage");
    assert!(e["message"].as_str().unwrap().contains("--episodes"));

    let e = err_json(&arena(dir.path(), &["solve", "--game", "nim", "--piles", "3,x"]), 1);
    assert_eq!(e["error"], "failed");
}
