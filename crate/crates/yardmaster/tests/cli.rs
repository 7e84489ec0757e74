use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value as Json;
use yardmaster_core::comms::vectors::conformance_vectors_jsonl;

fn yardmaster(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_yardmaster")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

#[test]
fn comms_vectors_prints_the_canonical_set() {
    let out = yardmaster(&["comms", "vectors"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), conformance_vectors_jsonl());
}

#[test]
fn store_load_then_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store = store.to_str().unwrap();
    let scenario = fixtures().join("scenario");
    yardmaster(&["store", "--dir", store, "load", scenario.to_str().unwrap()]);
    let first = String::from_utf8(yardmaster(&["store", "dump", "--dir", store]).stdout).unwrap();
    let lines: Vec<Json> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.iter().filter(|l| l.get("task_sequence").is_some()).count(), 2);
    assert!(lines.iter().any(|l| l["record_name"] == "CONTINUE_FLG"));

    // loading the dump again changes nothing
    let again = dir.path().join("again.jsonl");
    std::fs::write(&again, &first).unwrap();
    yardmaster(&["store", "load", again.to_str().unwrap(), "--dir", store]);
    let second = String::from_utf8(yardmaster(&["store", "dump", "--dir", store]).stdout).unwrap();
    assert_eq!(first, second);
}

#[test]
fn run_scenario_writes_a_report_and_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("out.json");
    let events = dir.path().join("events.jsonl");
    let config = fixtures().join("site.json");
    let out = yardmaster(&[
        "run-scenario",
        "--cycles",
        "1",
        "--seed",
        "7",
        "--config",
        config.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--events",
        events.to_str().unwrap(),
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("1 cycles"));
    let r: Json = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["seed"], 7);
    assert_eq!(r["cycles"].as_array().unwrap().len(), 1);
    assert!(r["residual"].as_f64().unwrap().abs() < 1e-9);
    assert!(r["tasks"].as_array().unwrap().iter().all(|t| t["status"] == "SUCCESS"));
    let log = std::fs::read_to_string(&events).unwrap();
    let steps = log.lines().filter(|l| l.starts_with(r#"{"event":"step""#)).count() as u64;
    assert_eq!(steps, r["steps"].as_u64().unwrap());
}

#[test]
fn run_scenario_fails_on_a_tiny_budget() {
    let out = Command::new(env!("CARGO_BIN_EXE_yardmaster"))
        .args(["run-scenario", "--cycles", "1", "--max-sim-time", "3"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not finish"));
}
