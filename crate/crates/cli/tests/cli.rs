use std::process::Command;

fn lmo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lmo")).args(args).output().unwrap()
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["extract", "train-classifiers", "train-dqn", "simulate", "serve", "report", "replay"] {
        let out = lmo(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8(out.stdout).unwrap().contains("--json"), "{sub}");
    }
}

#[test]
fn json_mode_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = lmo(&["extract", "--input", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--json"]);
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["error"].as_str().is_some_and(|e| !e.is_empty()));
}

#[test]
fn report_without_inputs_only_notes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lmo(&["report", "--out", dir.path().to_str().unwrap(), "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!v["notes"].as_array().unwrap().is_empty());
}
