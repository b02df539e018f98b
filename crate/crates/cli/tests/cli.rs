use std::process::{Command, Output};

use serde_json::Value;

fn cril(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cril")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const GOLDEN: &str = "ε,ε,1,2,3,1,ε,ε";

#[test]
fn check_accepts_the_corpus() {
    for name in ["shared", "airline-racy", "airline-semaphore"] {
        let o = cril(&["check", name]);
        assert!(o.status.success(), "{name}");
        assert_eq!(stdout(&o), "ok\n");
    }
}

#[test]
fn check_rejects_bad_programs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cril");
    std::fs::write(&bad, "begin main\nx += 1\n-> nowhere\n").unwrap();
    let o = cril(&["check", bad.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ok"], false);
    assert!(!v["violations"].as_array().unwrap().is_empty());

    std::fs::write(&bad, "begin main\nx += \n").unwrap();
    let o = cril(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cril"));
    assert_eq!(cril(&["run", "no-such-file.cril"]).status.code(), Some(1));
}

#[test]
fn run_prints_the_store_table() {
    let o = cril(&["run", "shared", "--schedule", GOLDEN]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(
        rows[0].split('|').map(str::trim).collect::<Vec<_>>(),
        ["", "x", "y", "z"]
    );
    assert!(rows[5].starts_with("b6 ∈ PB(2)"));
    assert_eq!(
        rows[9].split('|').skip(1).map(str::trim).collect::<Vec<_>>(),
        ["2", "1", "1"]
    );
    assert_eq!(rows[10], "outcome: terminated");
}

#[test]
fn trace_json_replays() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let t = trace.to_str().unwrap();
    let a = cril(&["run", "airline-racy", "--seed", "11", "--trace-json", t]);
    assert!(a.status.success());
    let b = cril(&["run", "airline-racy", "--replay", t]);
    assert!(b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let entries: Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(entries[0]["pid"], "");
    assert_eq!(entries[0]["dir"], "forward");
    assert_eq!(entries[0]["block"], "b1");
    // the same seed gives the same run
    assert_eq!(stdout(&a), stdout(&cril(&["run", "airline-racy", "--seed", "11"])));
}

#[test]
fn backward_run_returns_to_the_start() {
    let o = cril(&["run", "shared", "--dir", "backward", "--seed", "4", "--json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"], "terminated");
    assert_eq!(v["final"]["is_initial"], true);
    assert_eq!(v["trace"][0]["block"], "b3");
    assert_eq!(v["trace"][0]["dir"], "backward");
}

#[test]
fn deadlock_and_assert_failure_exit_distinctly() {
    let dir = tempfile::tempdir().unwrap();
    let stuck = dir.path().join("stuck.cril");
    std::fs::write(&stuck, "begin main\nP s\nend main\n").unwrap();
    let o = cril(&["run", stuck.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("outcome: blocked"));

    let failing = dir.path().join("assert.cril");
    std::fs::write(&failing, "begin main\nassert x == 1\nend main\n").unwrap();
    let o = cril(&["run", failing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("assert-failed"));
}

#[test]
fn explore_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let o = cril(&[
        "explore",
        "shared",
        "--check",
        "sp,bti,wf,cc,cs,roundtrip",
        "--json",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["states"], 49);
    assert_eq!(v["edges"], 51);
    let props: Vec<&str> = v["properties"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["property"].as_str().unwrap())
        .collect();
    assert_eq!(props, ["sp", "bti", "wf", "cc", "cs", "roundtrip"]);
    assert!(v["properties"].as_array().unwrap().iter().all(|p| p["ok"] == true));
    assert!(stdout(&o).starts_with("49 states, 51 edges"));
}

#[test]
fn uncontrolled_exploration_fails_causal_consistency() {
    let o = cril(&[
        "explore",
        "shared",
        "--uncontrolled",
        "--max-states",
        "300",
        "--check",
        "cc",
        "--json",
        "-",
    ]);
    assert_eq!(o.status.code(), Some(5));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["truncated"], true);
    assert_eq!(v["properties"][0]["ok"], false);
    assert!(v["properties"][0]["counterexample"]["path"].is_array());
}

#[test]
fn explore_finds_the_oversold_seat() {
    let o = cril(&["explore", "airline-racy", "--check", "sp", "--json", "-"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["states"], 1369);
}

#[test]
fn dag_export() {
    let o = cril(&["dag", "shared", "--schedule", GOLDEN, "--format", "json"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 9);
    assert_eq!(v["write_edges"].as_array().unwrap().len(), 4);
    assert_eq!(v["read_edges"].as_array().unwrap().len(), 2);

    let o = cril(&["dag", "shared", "--schedule", GOLDEN]);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("style=dashed").count(), 2);
    assert_eq!(dot.matches("style=solid").count(), 4);
}

#[test]
fn unknown_property_is_an_input_error() {
    let o = cril(&["explore", "shared", "--check", "sp,nope"]);
    assert_eq!(o.status.code(), Some(1));
}
