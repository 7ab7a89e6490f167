mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ofa_core::eval::parse_records;
use serde_json::Value;

fn ofa(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ofa"));
    cmd.args(args).env_remove("OFA_CONFIG").env("RUST_LOG", "error");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn fixture(dir: &Path) -> PathBuf {
    let path = dir.join("data.jsonl");
    std::fs::write(&path, common::synthetic_jsonl(3, &["adasa", "alexa", "google", "houndify"], 60)).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_prints_split_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let out = ofa(&["validate", "--dataset", data.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("utterances=60 train=20 test=40 "), "{}", stdout(&out));
}

#[test]
fn usage_and_validation_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ofa(&["train-router", "--out", "m.txt"], &[]).status.code(), Some(2));
    assert_eq!(ofa(&["frobnicate"], &[]).status.code(), Some(2));
    assert_eq!(ofa(&["eval", "--strategy", "qr", "--bogus"], &[]).status.code(), Some(2));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 1}\n").unwrap();
    assert_eq!(ofa(&["validate", "--dataset", bad.to_str().unwrap()], &[]).status.code(), Some(1));
}

#[test]
fn eval_writes_records_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let report = dir.path().join("report.jsonl");
    let out = ofa(
        &[
            "eval", "--dataset", data.to_str().unwrap(), "--strategy", "qr", "--scorer", "bm25",
            "--format", "records", "--out", report.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed = parse_records(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed.strategy, "qr/bm25");
    assert_eq!(parsed.n_agents, 4);
}

#[test]
fn training_is_reproducible_and_usable_by_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let d = data.to_str().unwrap();
    let m1 = dir.path().join("m1.txt");
    let m2 = dir.path().join("m2.txt");
    for m in [&m1, &m2] {
        let out = ofa(&["train-router", "--dataset", d, "--seed", "9", "--out", m.to_str().unwrap()], &[]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    let out = ofa(
        &["eval", "--dataset", d, "--strategy", "qa-examples", "--router-model", m1.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("qa-examples"));
}

#[test]
fn config_file_from_environment_supplies_dataset() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let config = dir.path().join("ofa.toml");
    std::fs::write(&config, "dataset_path = \"data.jsonl\"\ndefault_scorer = \"tfidf\"\n").unwrap();
    let out = ofa(&["eval", "--strategy", "qr"], &[("OFA_CONFIG", &config)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("qr/tfidf"));
    let out = ofa(&["eval", "--strategy", "qr", "--scorer", "bm25"], &[("OFA_CONFIG", &config)]);
    assert!(stdout(&out).contains("qr/bm25"));
}

#[test]
fn score_debug_emits_records() {
    let dir = tempfile::tempdir().unwrap();
    let agents = dir.path().join("agents.jsonl");
    std::fs::write(
        &agents,
        "{\"id\":\"sky\",\"description\":\"Get weather forecasts. Set alarms.\"}\n{\"id\":\"tunes\",\"description\":\"Play songs.\"}\n",
    )
    .unwrap();
    let out = ofa(&["score-debug", "--agents", agents.to_str().unwrap(), "--query", "weather songs"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let records: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kinds: Vec<&str> = records.iter().map(|r| r["record"].as_str().unwrap()).collect();
    assert!(kinds.contains(&"term") && kinds.contains(&"contribution") && kinds.contains(&"score"));
    let scores: Vec<_> = records.iter().filter(|r| r["record"] == "score").collect();
    assert_eq!(scores.len(), 3);
}

#[tokio::test]
async fn fleet_serves_replayed_answers() {
    use std::io::{BufRead, BufReader};

    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_ofa"))
        .args(["fleet", "--dataset", data.to_str().unwrap(), "--port", "0"])
        .env_remove("OFA_CONFIG")
        .env("RUST_LOG", "error")
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let profile: Value = serde_json::from_str(&line).unwrap();
    assert_eq!(profile["id"], "adasa");
    let endpoint = profile["endpoint"].as_str().unwrap();

    let ds = ofa_core::model::load_dataset(&data, 3).unwrap();
    let ex = &ds.examples[0];
    let reply: Value = reqwest::Client::new()
        .post(format!("{endpoint}/respond"))
        .json(&serde_json::json!({"text": ex.query.text}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(reply["agent"], "adasa");
    assert_eq!(reply["text"].as_str().unwrap(), ex.responses["adasa"].text);
}
