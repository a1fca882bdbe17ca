use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lottery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lottery"))
        .args(args)
        .output()
        .expect("spawn lottery")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn build_reports_closed_form_total() {
    let out = lottery(&["build", "--n", "4", "--mode", "plain"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["totalOffchain"], 56);
    assert_eq!(v["materialized"], true);
}

#[test]
fn build_rejects_non_power_of_two() {
    let out = lottery(&["build", "--n", "3", "--mode", "plain"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("NotPowerOfTwo"));
}

#[test]
fn build_large_plain_is_stats_only() {
    let out = lottery(&["build", "--n", "16", "--mode", "plain"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(json(&out)["materialized"], false);
}

#[test]
fn unknown_and_missing_flags_are_errors() {
    assert_eq!(
        lottery(&["build", "--n", "4", "--bogus"]).status.code(),
        Some(2)
    );
    assert_eq!(lottery(&["build"]).status.code(), Some(2));
    assert_eq!(lottery(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_accepts_honest_and_refuses_tampered_scaffold() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    let out = lottery(&[
        "build",
        "--n",
        "4",
        "--scaffold-out",
        good.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(lottery(&["verify", "--scaffold", good.to_str().unwrap()])
        .status
        .success());

    let mut t: Value = serde_json::from_slice(&fs::read(&good).unwrap()).unwrap();
    let copied = t["levels"][0][0][0]["leftCommit"].clone();
    t["levels"][0][1][0]["leftCommit"] = copied;
    let bad = dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_vec(&t).unwrap()).unwrap();
    let out = lottery(&[
        "verify",
        "--scaffold",
        bad.to_str().unwrap(),
        "--party",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        stderr(&out).contains("DuplicateCommitment"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn sweep_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "honest4.json",
        r#"{"backend":"ethereum","N":4,"strategyByPlayer":["honest","honest","honest","honest"],"masterSeed":11}"#,
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = lottery(&[
            "sweep",
            "--config",
            &cfg,
            "--trials",
            "10000",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let doc = json(&out);
        assert_eq!(doc["summary"]["trials"], 10000);
        assert_eq!(doc["dominance"]["pass"], true);
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "seed,committed,winner,payoff_0,payoff_1,payoff_2,payoff_3,finalHeight,onChainTxCount"
    );
    assert_eq!(text.lines().count(), 10001);
}

#[test]
fn sweep_bitcoin_small() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mix.json",
        r#"{"backend":"bitcoin-multiinput","N":4,"strategyByPlayer":["honest","abort-open","honest","selective-abort-open"]}"#,
    );
    let summary = dir.path().join("s.json");
    let out = lottery(&[
        "sweep",
        "--config",
        &cfg,
        "--trials",
        "50",
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 51);
    let doc: Value = serde_json::from_slice(&fs::read(summary).unwrap()).unwrap();
    assert_eq!(doc["summary"]["maxLockedBeyondBet"], 0);
}

#[test]
fn run_prints_trial_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "abort.json",
        r#"{"backend":"ethereum","N":4,"strategyByPlayer":["honest","abort-deposit","honest","honest"]}"#,
    );
    let out = lottery(&["run", "--config", &cfg, "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["committed"], false);
    for p in v["perPlayer"].as_array().unwrap() {
        assert_eq!(p["netPayoff"], 0);
    }
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"backend":"ethereum","N":4,"strategyByPlayer":["honest","nope","honest","honest"]}"#,
    );
    let out = lottery(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("UnknownStrategy"));
    let cfg = write_config(dir.path(), "junk.json", "{");
    assert_eq!(lottery(&["sweep", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn costs_ethereum_has_no_collateral() {
    let out = lottery(&["costs", "--backend", "ethereum", "--n", "8"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = json(&out);
    assert_eq!(v["collateralBeyondBet"], 0);
    assert!(v["onChainTxCount"].as_u64().unwrap() <= 1 + 8 + 4 * 7 + 1);
}

#[test]
fn export_dot_writes_graph() {
    let out = lottery(&["export-dot", "--n", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("digraph"));
}
