mod common;

use std::fs;
use std::path::Path;

use common::*;
use isl::error::Error;
use isl::harness::experiments::make_targets;
use isl::harness::stages::{run_stage, Stage};
use isl::harness::{evaluate, read_csv, ExperimentConfig, Provenance};
use isl::learner::Oracle;

fn smoke() -> ExperimentConfig {
    ExperimentConfig::load(experiment("smoke")).unwrap()
}

fn run(cfg: &ExperimentConfig, seed: u64, out: &Path, stages: &[Stage]) {
    for &s in stages {
        run_stage(s, cfg, seed, out).unwrap();
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn oracle_learner_reaches_every_target() {
    let cfg = smoke();
    let m = cfg.robot_model().unwrap();
    let t = make_targets(&m, cfg.targets.as_ref().unwrap()).unwrap();
    let r = evaluate(&m, &Oracle(&m), &t.train, &cfg.evaluate.settle, 0);
    assert_eq!(r.failures, 0);
    assert!(r.rmse_task.unwrap() < 1e-4, "{:?}", r.rmse_task);
    assert!(r.rmse_torque.unwrap() < 1e-12);
}

#[test]
fn empty_target_set_reports_nothing() {
    let m = robot("planar_2r");
    let r = evaluate(&m, &Oracle(&m), &[], &Default::default(), 0);
    assert!(r.entries.is_empty());
    assert_eq!((r.rmse_task, r.rmse_torque, r.failures), (None, None, 0));
}

#[test]
fn stages_chain_and_reproduce() {
    let cfg = smoke();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let chain = [Stage::SstExplore, Stage::GoalBabble, Stage::Evaluate];
    run(&cfg, 2, a.path(), &chain);
    run(&cfg, 2, b.path(), &chain);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    for (x, y) in fa.iter().zip(&fb) {
        assert!(x.1 == y.1, "{} differs between identical runs", x.0);
    }

    // RMSE in the summary equals a recomputation from the per-target CSV
    let prov = Provenance::new(&cfg, 2).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("summary-goal-babble.json")).unwrap()).unwrap();
    let (header, rows) = read_csv(&a.path().join("eval-goal_babbling-train.csv"), &prov).unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let errs: Vec<f64> =
        rows.iter().filter(|r| r[col("status")] == "Settled").map(|r| r[col("task_error")].parse().unwrap()).collect();
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    let reported = summary["payload"]["train"]["rmse_task_m"].as_f64().unwrap();
    assert_eq!(rmse, reported);

    // evaluating the stored learner again gives the same numbers
    let ev: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("summary-evaluate.json")).unwrap()).unwrap();
    assert_eq!(ev["payload"]["train"]["rmse_task_m"], summary["payload"]["train"]["rmse_task_m"]);
}

#[test]
fn mismatched_artifacts_are_refused() {
    let cfg = smoke();
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, 0, dir.path(), &[Stage::SstExplore]);
    // another seed
    assert!(matches!(run_stage(Stage::GoalBabble, &cfg, 1, dir.path()), Err(Error::HashMismatch { .. })));
    // another config
    let mut other = cfg.clone();
    other.goal_babbling.samples += 1;
    assert!(matches!(run_stage(Stage::GoalBabble, &other, 0, dir.path()), Err(Error::HashMismatch { .. })));
    // a missing predecessor
    let empty = tempfile::tempdir().unwrap();
    assert!(run_stage(Stage::Evaluate, &cfg, 0, empty.path()).is_err());
}

#[test]
fn every_output_carries_provenance() {
    let cfg = smoke();
    let dir = tempfile::tempdir().unwrap();
    run(&cfg, 5, dir.path(), &[Stage::SstExplore, Stage::GoalBabble]);
    let hash = cfg.hash().unwrap();
    for (name, bytes) in files(dir.path()) {
        let text = String::from_utf8(bytes).unwrap();
        if name.ends_with(".csv") {
            assert!(text.starts_with(&format!("# config_hash={hash}, seed=5\n")), "{name}");
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config_hash"], hash.as_str(), "{name}");
            assert_eq!(v["seed"], 5, "{name}");
        }
    }
}
