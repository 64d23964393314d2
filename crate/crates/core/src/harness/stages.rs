//! CLI stages. Each stage reads the artifacts of its predecessors from the output directory,
//! writes its own, and returns the run summary (also written as `summary-<stage>.json`).

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::config::{DsRegion, LearnerKind};
use super::experiments::{
    build_sst, evaluate, make_targets, run_direction_sampling_experiment, run_goal_babbling_experiment,
    run_speedup_experiment, run_symmetry_experiment, EvaluationReport, SymmetryArtifact,
};
use super::{fmt, read_bin, read_json, write_bin, write_csv, write_json, ExperimentConfig, Provenance};
use crate::error::{Error, Result};
use crate::goal_babbling::RunLog;
use crate::learner::{BatchNet, InverseStatics, LocalLinearMap};
use crate::model::ManipulatorModel;
use crate::sst::SstEstimate;
use crate::symmetry::bcts_fraction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    SstExplore,
    DiscoverSym,
    GoalBabble,
    DirectionSample,
    BatchLearn,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::SstExplore => "sst-explore",
            Stage::DiscoverSym => "discover-sym",
            Stage::GoalBabble => "goal-babble",
            Stage::DirectionSample => "direction-sample",
            Stage::BatchLearn => "batch-learn",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

pub const SST_FILE: &str = "sst.json";
pub const SYMMETRY_FILE: &str = "symmetry.json";
pub const NET_FILE: &str = "net.bin";

fn llm_file(kind: LearnerKind) -> &'static str {
    match kind {
        LearnerKind::GoalBabbling => "llm-goal_babbling.json",
        LearnerKind::DirectionSampling => "llm-direction_sampling.json",
        LearnerKind::Batch => NET_FILE,
    }
}

pub fn run_stage(stage: Stage, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Value> {
    fs::create_dir_all(out)?;
    let prov = Provenance::new(cfg, seed)?;
    let model = cfg.robot_model()?;
    let summary = match stage {
        Stage::SstExplore => sst_explore(cfg, &model, &prov, out)?,
        Stage::DiscoverSym => discover(cfg, &model, &prov, out)?,
        Stage::GoalBabble => goal_babble(cfg, &model, &prov, out)?,
        Stage::DirectionSample => direction_sample(cfg, &model, &prov, out)?,
        Stage::BatchLearn => batch_learn(cfg, &model, &prov, out)?,
        Stage::Evaluate => evaluate_stage(cfg, &model, &prov, out)?,
        Stage::Report => report(cfg, seed, out)?,
    };
    write_json(&out.join(format!("summary-{}.json", stage.name())), "summary", &prov, &summary)?;
    Ok(summary)
}

fn load_sst(out: &Path, prov: &Provenance) -> Result<SstEstimate> {
    let mut sst: SstEstimate = read_json(&out.join(SST_FILE), "sst", prov)?;
    sst.rebuild_index();
    Ok(sst)
}

fn sst_explore(cfg: &ExperimentConfig, model: &ManipulatorModel, prov: &Provenance, out: &Path) -> Result<Value> {
    let sst = build_sst(cfg, model, prov.seed)?;
    write_json(&out.join(SST_FILE), "sst", prov, &sst)?;
    Ok(json!({
        "robot": model.name,
        "samples": sst.torque_samples.len(),
        "boundary_vertices": sst.boundary_vertices.len(),
        "boundary_facets": sst.boundary_facets.len(),
        "alpha": if sst.alpha.is_finite() { json!(sst.alpha) } else { Value::Null },
        "volume": sst.volume(),
    }))
}

fn discover(cfg: &ExperimentConfig, model: &ManipulatorModel, prov: &Provenance, out: &Path) -> Result<Value> {
    let sst = load_sst(out, prov)?;
    let res = run_symmetry_experiment(cfg, model, &sst, prov.seed)?;
    let n = model.n();
    let mut header = vec!["record".to_string()];
    header.extend((0..n).map(|i| format!("tau_star_{i}")));
    header.extend((0..n).map(|i| format!("q_{i}")));
    header.extend((0..n).map(|i| format!("sign_{i}")));
    header.push("settled".into());
    let mut rows = Vec::new();
    for (k, r) in res.records.iter().enumerate() {
        for e in &r.entries {
            let mut row = vec![k.to_string()];
            row.extend(r.tau_star.iter().map(|x| fmt(*x)));
            row.extend(e.q.iter().map(|x| fmt(*x)));
            row.extend(e.sign.iter().map(|s| s.to_string()));
            row.push((e.settled as u8).to_string());
            rows.push(row);
        }
    }
    write_csv(&out.join("level_sets.csv"), prov, &header, rows)?;
    write_json(&out.join(SYMMETRY_FILE), "symmetry", prov, &res.artifact)?;
    let bcts_frac = res.artifact.bcts.as_ref().map(|b| bcts_fraction(model, b, cfg.symmetry.bcts_samples, prov.seed));
    Ok(json!({
        "records": res.records.len(),
        "entries": res.records.iter().map(|r| r.entries.len()).collect::<Vec<_>>(),
        "settled": res.records.iter().map(|r| r.settled_count()).collect::<Vec<_>>(),
        "relations": res.artifact.relations.len(),
        "snap_rejected": res.artifact.snap_rejected,
        "sps": res.artifact.sps.len(),
        "partition": res.partition,
        "soundness_max": res.soundness.iter().cloned().fold(0.0, f64::max),
        "bcts_fraction": bcts_frac,
    }))
}

fn report_json(r: &EvaluationReport) -> Value {
    json!({
        "targets": r.entries.len(),
        "rmse_task_m": r.rmse_task,
        "rmse_torque_nm": r.rmse_torque,
        "failures": r.failures,
        "samples": r.samples,
    })
}

fn write_eval(path: &Path, prov: &Provenance, n: usize, r: &EvaluationReport) -> Result<()> {
    let mut header = Vec::new();
    for name in ["goal", "tau_hat", "q_plus"] {
        header.extend((0..n).map(|i| format!("{name}_{i}")));
    }
    header.extend(["status", "task_error", "torque_error"].map(String::from));
    let rows = r.entries.iter().map(|e| {
        let mut row: Vec<String> = e.goal.iter().chain(&e.tau_hat).chain(&e.q_plus).map(|x| fmt(*x)).collect();
        row.push(format!("{:?}", e.status));
        row.push(fmt(e.task_error));
        row.push(fmt(e.torque_error));
        row
    });
    write_csv(path, prov, &header, rows)
}

fn write_log(path: &Path, prov: &Provenance, n: usize, log: &RunLog) -> Result<()> {
    write_csv(path, prov, &RunLog::csv_header(n), log.csv_rows())
}

fn goal_babble(cfg: &ExperimentConfig, model: &ManipulatorModel, prov: &Provenance, out: &Path) -> Result<Value> {
    let sst = load_sst(out, prov)?;
    let res = run_goal_babbling_experiment(cfg, model, &sst, prov.seed, true)?;
    write_log(&out.join("gb_log.csv"), prov, model.n(), &res.log)?;
    write_json(&out.join(llm_file(LearnerKind::GoalBabbling)), "llm", prov, &res.learner)?;
    write_eval(&out.join("eval-goal_babbling-train.csv"), prov, model.n(), &res.train)?;
    write_eval(&out.join("eval-goal_babbling-test.csv"), prov, model.n(), &res.test)?;
    Ok(json!({
        "steps": res.steps,
        "prototypes": res.learner.prototypes.len(),
        "clipped": res.clipped,
        "clip_violations": res.clip_violations,
        "failed_settles": res.failed_settles,
        "train": report_json(&res.train),
        "test": report_json(&res.test),
    }))
}

fn load_symmetry(out: &Path, prov: &Provenance) -> Result<SymmetryArtifact> {
    read_json(&out.join(SYMMETRY_FILE), "symmetry", prov)
}

fn direction_sample(cfg: &ExperimentConfig, model: &ManipulatorModel, prov: &Provenance, out: &Path) -> Result<Value> {
    let sst = load_sst(out, prov)?;
    let dc = &cfg.direction_sampling;
    let sym = if dc.expand || dc.region == DsRegion::Bcts { Some(load_symmetry(out, prov)?) } else { None };
    let res = run_direction_sampling_experiment(cfg, model, &sst, sym.as_ref(), prov.seed, true)?;
    write_log(&out.join("ds_log.csv"), prov, model.n(), &res.log)?;
    write_json(&out.join(llm_file(LearnerKind::DirectionSampling)), "llm", prov, &res.learner)?;
    write_eval(&out.join("eval-direction_sampling-inside.csv"), prov, model.n(), &res.inside)?;
    write_eval(&out.join("eval-direction_sampling-outside.csv"), prov, model.n(), &res.outside)?;
    Ok(json!({
        "steps": dc.samples,
        "prototypes": res.learner.prototypes.len(),
        "counters": res.counters,
        "cells_region": res.cells_region,
        "cells_hit": res.cells_hit,
        "coverage": res.coverage,
        "inside": report_json(&res.inside),
        "outside": report_json(&res.outside),
    }))
}

fn batch_learn(cfg: &ExperimentConfig, model: &ManipulatorModel, prov: &Provenance, out: &Path) -> Result<Value> {
    let sym = load_symmetry(out, prov)?;
    let res = run_speedup_experiment(cfg, model, &sym, prov.seed)?;
    write_bin(&out.join(NET_FILE), prov, &res.net.to_bytes())?;
    let header = ["samples", "train_rmse", "test_rmse"].map(String::from);
    let rows = res.full.iter().map(|r| vec![r.samples.to_string(), fmt(r.train_rmse), fmt(r.test_rmse)]);
    write_csv(&out.join("batch_full_space.csv"), prov, &header, rows)?;
    Ok(json!({
        "bcts_samples": res.bcts_samples,
        "expanded_samples": res.expanded_samples,
        "train_rmse_nm": res.train_rmse,
        "test_rmse_nm": res.test_rmse,
        "full_space": res.full,
        "matched_full_space_samples": res.matched,
        "ratio": res.ratio,
    }))
}

fn evaluate_stage(cfg: &ExperimentConfig, model: &ManipulatorModel, prov: &Provenance, out: &Path) -> Result<Value> {
    let spec = cfg.targets.as_ref().ok_or_else(|| Error::InvalidConfig("evaluate needs [targets]".into()))?;
    let targets = make_targets(model, spec)?;
    let kind = cfg.evaluate.learner;
    let path = out.join(llm_file(kind));
    let learner: Box<dyn InverseStatics> = match kind {
        LearnerKind::Batch => Box::new(BatchNet::from_bytes(&read_bin(&path, prov)?)?),
        _ => {
            let m: LocalLinearMap = read_json(&path, "llm", prov)?;
            Box::new(m)
        }
    };
    let p = cfg.evaluate.settle;
    let train = evaluate(model, learner.as_ref(), &targets.train, &p, 0);
    let test = evaluate(model, learner.as_ref(), &targets.test, &p, 0);
    write_eval(&out.join("eval-train.csv"), prov, model.n(), &train)?;
    write_eval(&out.join("eval-test.csv"), prov, model.n(), &test)?;
    Ok(json!({ "learner": kind, "train": report_json(&train), "test": report_json(&test) }))
}

#[derive(Clone, Debug, serde::Serialize)]
struct Table1Line {
    label: String,
    robot: String,
    grid_cm: String,
    targets: usize,
    samples: usize,
    train_rmse_m: Option<f64>,
    test_rmse_m: Option<f64>,
    per_seed_train: Vec<Option<f64>>,
    per_seed_test: Vec<Option<f64>>,
}

fn median(v: &[Option<f64>]) -> Option<f64> {
    let mut x: Vec<f64> = v.iter().flatten().copied().collect();
    if x.is_empty() {
        return None;
    }
    x.sort_by(f64::total_cmp);
    let m = x.len();
    Some(if m % 2 == 1 { x[m / 2] } else { 0.5 * (x[m / 2 - 1] + x[m / 2]) })
}

/// Runs every Table I row listed in `[table1]` (SST, goal babbling, evaluation per seed).
pub fn run_table1(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Value>> {
    let spec = cfg.table1.as_ref().ok_or_else(|| Error::InvalidConfig("report needs [table1]".into()))?;
    let mut lines = Vec::new();
    for row in &spec.rows {
        let rc = ExperimentConfig::load(cfg.resolve(&row.config))?;
        let model = rc.robot_model()?;
        let t = rc.targets.as_ref().ok_or_else(|| Error::InvalidConfig(format!("row {} has no targets", row.label)))?;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in 0..spec.repeats.max(1) {
            let s = seed + r as u64;
            let sst = build_sst(&rc, &model, s)?;
            let res = run_goal_babbling_experiment(&rc, &model, &sst, s, false)?;
            log::info!("{} seed {s}: train {:?} test {:?}", row.label, res.train.rmse_task, res.test.rmse_task);
            train.push(res.train.rmse_task);
            test.push(res.test.rmse_task);
        }
        let grid = t.extent.iter().map(|e| format!("{}", (e * 1000.0).round() / 10.0)).collect::<Vec<_>>().join("x");
        let line = Table1Line {
            label: row.label.clone(),
            robot: model.name.clone(),
            grid_cm: grid,
            targets: t.counts.iter().product(),
            samples: rc.goal_babbling.samples,
            train_rmse_m: median(&train),
            test_rmse_m: median(&test),
            per_seed_train: train,
            per_seed_test: test,
        };
        lines.push(serde_json::to_value(line)?);
    }
    Ok(lines)
}

fn report(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Value> {
    let prov = Provenance::new(cfg, seed)?;
    let lines = run_table1(cfg, seed)?;
    let header = ["robot", "grid_cm", "targets", "train_rmse_m", "samples", "test_rmse_m"].map(String::from);
    let opt = |v: &Value| v.as_f64().map(fmt).unwrap_or_else(|| "NA".into());
    let rows = lines.iter().map(|l| {
        vec![
            l["robot"].as_str().unwrap_or_default().to_string(),
            l["grid_cm"].as_str().unwrap_or_default().to_string(),
            l["targets"].to_string(),
            opt(&l["train_rmse_m"]),
            l["samples"].to_string(),
            opt(&l["test_rmse_m"]),
        ]
    });
    write_csv(&out.join("table1.csv"), &prov, &header, rows)?;
    Ok(json!({ "rows": lines }))
}
