use std::path::PathBuf;
use std::process::Command;

fn smoke() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiments/smoke.toml")
}

fn isl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isl")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn sst_explore_prints_summary_and_writes_artifact() {
    let out = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let o = isl(&["sst-explore", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["samples"].as_u64().unwrap() > 0);
    assert!(std::fs::read_dir(out.path()).unwrap().count() > 0);
}

#[test]
fn missing_predecessor_fails_with_message() {
    let out = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let o = isl(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("evaluate failed"));
}

#[test]
fn unknown_config_is_reported() {
    let out = tempfile::tempdir().unwrap();
    let o = isl(&["goal-babble", "--config", "/nonexistent.toml", "--out", out.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("loading /nonexistent.toml"));
}
