//! In-memory experiment drivers shared by the CLI stages and the acceptance suite.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{DsRegion, ExperimentConfig, TargetSpec, TestTargets};
use crate::direction_sampling::{DirectionSampler, DsCounters, Region};
use crate::error::{Error, Result};
use crate::goal_babbling::{run_with, stream, stream_rng, Babbler, Expander, RunLog};
use crate::learner::{batch_train, lattice_sample, BatchNet, InverseStatics, LocalLinearMap};
use crate::model::{settle, Configuration, ManipulatorModel, SettleParams, SettleStatus};
use crate::sst::{explore_sst_with, SstEstimate};
use crate::symmetry::{
    construct_bcts, discover_sps, discover_sym, expand_sample, partition_record, soundness, target_lattice, Bcts,
    LevelSetRecord, Sps, SymmetryRelation,
};

// ---------------------------------------------------------------------------------------------
// targets

/// Task-space grid points. `offset` yields the cell centres (one fewer per axis).
pub fn task_grid(spec: &TargetSpec, offset: bool) -> Vec<Vector3<f64>> {
    let d = spec.extent.len();
    let axes: Vec<usize> = if spec.axes.is_empty() { (0..d).collect() } else { spec.axes.clone() };
    let counts: Vec<usize> = spec.counts.iter().map(|&c| if offset { c.saturating_sub(1) } else { c }).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = Vector3::new(spec.center[0], spec.center[1], spec.center[2]);
        for k in 0..d {
            let i = rem % counts[k];
            rem /= counts[k];
            let c = spec.counts[k];
            let u = if c == 1 {
                0.5
            } else if offset {
                (i as f64 + 0.5) / (c - 1) as f64
            } else {
                i as f64 / (c - 1) as f64
            };
            p[axes[k]] += (u - 0.5) * spec.extent[k];
        }
        out.push(p);
    }
    out
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Targets {
    pub train: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
}

/// Joint goals for the task-space grids; every goal must be a stable rest pose within limits.
pub fn make_targets(model: &ManipulatorModel, spec: &TargetSpec) -> Result<Targets> {
    let convert = |pts: Vec<Vector3<f64>>| -> Result<Vec<Vec<f64>>> {
        pts.iter()
            .map(|p| {
                let q = model
                    .inverse_kinematics(p, &spec.seed_configuration)
                    .ok_or_else(|| Error::InvalidConfig(format!("target {p:?} is unreachable")))?;
                if !model.within_limits(q.as_slice()) || !model.is_stable_equilibrium(q.as_slice()) {
                    return Err(Error::InvalidConfig(format!("target {:?} maps to an unusable pose {q:?}", p.as_slice())));
                }
                Ok(q.as_slice().to_vec())
            })
            .collect()
    };
    let train = convert(task_grid(spec, false))?;
    let test = match spec.test {
        TestTargets::Offset => convert(task_grid(spec, true))?,
        TestTargets::None => Vec::new(),
    };
    Ok(Targets { train, test })
}

// ---------------------------------------------------------------------------------------------
// evaluation

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalEntry {
    pub goal: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub q_plus: Vec<f64>,
    pub status: SettleStatus,
    /// m.
    pub task_error: f64,
    /// N m, `|tau_hat - G(goal)|`.
    pub torque_error: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct EvaluationReport {
    pub entries: Vec<EvalEntry>,
    /// Over settled entries; None when there are none.
    pub rmse_task: Option<f64>,
    /// Over all entries; None when empty.
    pub rmse_torque: Option<f64>,
    pub failures: usize,
    /// Training samples seen by the learner.
    pub samples: usize,
}

/// Commands the learner's torque for each goal from home, settles and measures the errors.
pub fn evaluate(
    model: &ManipulatorModel,
    learner: &dyn InverseStatics,
    goals: &[Vec<f64>],
    params: &SettleParams,
    samples: usize,
) -> EvaluationReport {
    let home = model.home();
    let mut entries = Vec::with_capacity(goals.len());
    for g in goals {
        let tau = learner.predict(g);
        let out = settle(model, &home, &tau, params);
        let task_error = (model.forward_kinematics(out.q_final.as_slice()) - model.forward_kinematics(g)).norm();
        entries.push(EvalEntry {
            goal: g.clone(),
            tau_hat: tau.as_slice().to_vec(),
            q_plus: out.q_final.as_slice().to_vec(),
            status: out.status,
            task_error,
            torque_error: (&tau - model.gravity_term(g)).norm(),
        });
    }
    report_from_entries(entries, samples)
}

pub fn report_from_entries(entries: Vec<EvalEntry>, samples: usize) -> EvaluationReport {
    let ok: Vec<&EvalEntry> = entries.iter().filter(|e| e.status == SettleStatus::Settled).collect();
    let rms = |v: &mut dyn Iterator<Item = f64>, n: usize| {
        if n == 0 {
            None
        } else {
            Some((v.map(|x| x * x).sum::<f64>() / n as f64).sqrt())
        }
    };
    let rmse_task = rms(&mut ok.iter().map(|e| e.task_error), ok.len());
    let rmse_torque = rms(&mut entries.iter().map(|e| e.torque_error), entries.len());
    let failures = entries.len() - ok.len();
    EvaluationReport { entries, rmse_task, rmse_torque, failures, samples }
}

/// `sqrt(mean |pred - truth|^2)` with the Euclidean norm per sample.
pub fn torque_rmse(pred: &dyn InverseStatics, qs: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let s: f64 = qs
        .iter()
        .zip(truth)
        .map(|(q, t)| (pred.predict(q) - DVector::from_column_slice(t)).norm_squared())
        .sum();
    (s / qs.len().max(1) as f64).sqrt()
}

// ---------------------------------------------------------------------------------------------
// SST and goal babbling

pub fn build_sst(cfg: &ExperimentConfig, model: &ManipulatorModel, seed: u64) -> Result<SstEstimate> {
    let mut sst = explore_sst_with(model, cfg.sst.samples, seed, cfg.sst.alpha())?;
    sst.projection = cfg.sst.projection;
    Ok(sst)
}

pub struct GbOutcome {
    pub learner: LocalLinearMap,
    pub log: RunLog,
    pub targets: Targets,
    pub train: EvaluationReport,
    pub test: EvaluationReport,
    pub steps: usize,
    pub clipped: usize,
    pub clip_violations: usize,
    pub failed_settles: usize,
}

/// Goal babbling on the configured target grid for `goal_babbling.samples` steps, then evaluation.
pub fn run_goal_babbling_experiment(
    cfg: &ExperimentConfig,
    model: &ManipulatorModel,
    sst: &SstEstimate,
    seed: u64,
    record_log: bool,
) -> Result<GbOutcome> {
    let spec = cfg.targets.as_ref().ok_or_else(|| Error::InvalidConfig("goal babbling needs [targets]".into()))?;
    let targets = make_targets(model, spec)?;
    let gb = cfg.goal_babbling.to_config(targets.train.clone());
    let mut b = Babbler::new(model, sst, &gb, seed);
    b.record_log = record_log;
    let budget = cfg.goal_babbling.samples;
    let mut clipped = 0;
    let mut clip_violations = 0;
    let mut failed = 0;
    run_with(&mut b, &gb, seed, budget);
    // clipping statistics come from the step log
    if record_log {
        for s in &b.log.steps {
            clipped += s.clipped as usize;
            clip_violations += (!sst.contains(&s.tau_exec)) as usize;
            failed += (s.status != SettleStatus::Settled) as usize;
        }
    }
    let steps = b.steps();
    let settle_params = cfg.evaluate.settle;
    let train = evaluate(model, &b.learner, &targets.train, &settle_params, steps);
    let test = evaluate(model, &b.learner, &targets.test, &settle_params, steps);
    Ok(GbOutcome {
        learner: b.learner,
        log: b.log,
        targets,
        train,
        test,
        steps,
        clipped,
        clip_violations,
        failed_settles: failed,
    })
}

// ---------------------------------------------------------------------------------------------
// symmetry

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymmetryArtifact {
    pub relations: Vec<SymmetryRelation>,
    /// Track pairs whose free fit passed but whose snapped form failed validation.
    pub snap_rejected: usize,
    pub sps: Sps,
    pub bcts: Option<Bcts>,
}

pub struct SymmetryOutcome {
    pub records: Vec<LevelSetRecord>,
    pub artifact: SymmetryArtifact,
    /// Worst soundness residual (N m) per SPS element.
    pub soundness: Vec<f64>,
    /// Orbit sizes in the first record.
    pub partition: Vec<usize>,
}

pub fn symmetry_targets(cfg: &ExperimentConfig, model: &ManipulatorModel, sst: &SstEstimate) -> Vec<Vec<f64>> {
    let n = model.n();
    let (lo, hi) = sst.bounding_box();
    let frac = cfg.symmetry.center_fraction(n);
    let center: Vec<f64> = (0..n).map(|i| lo[i] + frac[i] * (hi[i] - lo[i])).collect();
    let spacing: Vec<f64> = (0..n).map(|i| cfg.symmetry.spacing * (hi[i] - lo[i])).collect();
    target_lattice(&center, &spacing, &cfg.symmetry.lattice_shape(n))
}

pub fn run_symmetry_experiment(
    cfg: &ExperimentConfig,
    model: &ManipulatorModel,
    sst: &SstEstimate,
    seed: u64,
) -> Result<SymmetryOutcome> {
    let (lo, hi) = sst.bounding_box();
    let sc = &cfg.symmetry;
    let records: Vec<LevelSetRecord> = symmetry_targets(cfg, model, sst)
        .iter()
        .enumerate()
        .map(|(k, t)| discover_sym(model, t, (&lo, &hi), &sc.discovery, seed.wrapping_add((k as u64) << 32)))
        .collect();
    let (all, sps) = discover_sps(model, &records, &sc.matching)?;
    let snap_rejected = all.iter().filter(|r| r.snap_rejected).count();
    // one relation per distinct map
    let mut relations: Vec<SymmetryRelation> = Vec::new();
    for r in all.into_iter().filter(|r| r.snapped) {
        let m = r.as_map().expect("snapped").normalized(model);
        if !relations.iter().any(|x| x.as_map().unwrap().normalized(model).same_as(&m, model)) {
            relations.push(r);
        }
    }
    let mut rng = stream_rng(seed, stream::LATTICE);
    let sound: Vec<f64> = sps.elements.iter().map(|g| soundness(model, g, sc.soundness_samples, &mut rng)).collect();
    let partition = partition_record(model, &sps, &records[0], 1e-3).iter().map(Vec::len).collect();
    let bcts = if sps.len() > 1 { Some(construct_bcts(model, &sps, sc.anchor.as_deref(), sc.stable_first)?) } else { None };
    Ok(SymmetryOutcome {
        records,
        artifact: SymmetryArtifact { relations, snap_rejected, sps, bcts },
        soundness: sound,
        partition,
    })
}

/// Uniform configurations within the limit box.
pub fn random_configurations(model: &ManipulatorModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, stream::LATTICE);
    (0..count).map(|_| (0..model.n()).map(|i| rng.gen_range(model.q_min[i]..model.q_max[i])).collect()).collect()
}

pub fn expander_for(model: &ManipulatorModel, sps: &Sps) -> Expander {
    let model = model.clone();
    let sps = sps.clone();
    Box::new(move |q: &Configuration, tau: &DVector<f64>| expand_sample(&model, &sps, q.as_slice(), tau.as_slice()))
}

// ---------------------------------------------------------------------------------------------
// direction sampling

pub struct DsOutcome {
    pub learner: LocalLinearMap,
    pub log: RunLog,
    pub counters: DsCounters,
    pub cells_region: usize,
    pub cells_hit: usize,
    pub coverage: f64,
    pub inside: EvaluationReport,
    pub outside: EvaluationReport,
}

/// Regular cell grid over the limit box.
fn cell_index(model: &ManipulatorModel, q: &[f64], cells: usize) -> usize {
    let mut idx = 0;
    for i in (0..model.n()).rev() {
        let u = (q[i] - model.q_min[i]) / (model.q_max[i] - model.q_min[i]);
        let k = ((u * cells as f64).floor() as isize).clamp(0, cells as isize - 1) as usize;
        idx = idx * cells + k;
    }
    idx
}

fn cell_centers(model: &ManipulatorModel, cells: usize) -> Vec<Vec<f64>> {
    let n = model.n();
    (0..cells.pow(n as u32))
        .map(|idx| {
            let mut rem = idx;
            (0..n)
                .map(|i| {
                    let k = rem % cells;
                    rem /= cells;
                    model.q_min[i] + (k as f64 + 0.5) / cells as f64 * (model.q_max[i] - model.q_min[i])
                })
                .collect()
        })
        .collect()
}

fn evenly_spaced<T: Clone>(v: &[T], k: usize) -> Vec<T> {
    if v.len() <= k {
        return v.to_vec();
    }
    (0..k).map(|i| v[(2 * i + 1) * v.len() / (2 * k)].clone()).collect()
}

pub fn run_direction_sampling_experiment(
    cfg: &ExperimentConfig,
    model: &ManipulatorModel,
    sst: &SstEstimate,
    sym: Option<&SymmetryArtifact>,
    seed: u64,
    record_log: bool,
) -> Result<DsOutcome> {
    let dc = &cfg.direction_sampling;
    let bcts = match dc.region {
        DsRegion::Bcts => Some(
            sym.and_then(|s| s.bcts.clone())
                .ok_or_else(|| Error::InvalidConfig("direction sampling in the BCTS needs a symmetry artifact".into()))?,
        ),
        DsRegion::Limits => None,
    };
    let in_region = |q: &[f64]| match &bcts {
        Some(b) => b.contains(model, q),
        None => model.within_limits(q),
    };
    let region = match &bcts {
        Some(b) => {
            let (m, b) = (model.clone(), b.clone());
            Region::Set(Box::new(move |q: &[f64]| b.contains(&m, q)))
        }
        None => Region::Limits,
    };
    let expander = if dc.expand {
        let s = sym.ok_or_else(|| Error::InvalidConfig("expansion needs a symmetry artifact".into()))?;
        Some(expander_for(model, &s.sps))
    } else {
        None
    };
    let mut ds = DirectionSampler::new(model, sst, &dc.params, region, expander, seed);
    ds.babbler.record_log = record_log;
    let cells = dc.coverage_cells.max(1);
    let centers = cell_centers(model, cells);
    let region_cells: Vec<bool> = centers.iter().map(|c| in_region(c)).collect();
    let mut hit = vec![false; centers.len()];
    for _ in 0..dc.samples {
        let rec = ds.step();
        if rec.status == SettleStatus::Settled {
            hit[cell_index(model, &rec.q_plus, cells)] = true;
        }
    }
    let cells_region = region_cells.iter().filter(|&&r| r).count();
    let cells_hit = region_cells.iter().zip(&hit).filter(|(&r, &h)| r && h).count();
    let coverage = cells_hit as f64 / cells_region.max(1) as f64;

    // evaluation targets: stable grid poses, split by region membership
    let grid = cell_centers(model, dc.target_grid.max(2));
    let stable: Vec<Vec<f64>> = grid.into_iter().filter(|q| model.is_stable_equilibrium(q)).collect();
    let (inside, outside): (Vec<Vec<f64>>, Vec<Vec<f64>>) = stable.into_iter().partition(|q| in_region(q));
    let inside = evenly_spaced(&inside, dc.inside_targets);
    let outside = evenly_spaced(&outside, dc.outside_targets);
    let steps = ds.babbler.steps();
    let p = cfg.evaluate.settle;
    let inside_r = evaluate(model, &ds.babbler.learner, &inside, &p, steps);
    let outside_r = evaluate(model, &ds.babbler.learner, &outside, &p, steps);
    Ok(DsOutcome {
        learner: ds.babbler.learner,
        log: ds.babbler.log,
        counters: ds.counters,
        cells_region,
        cells_hit,
        coverage,
        inside: inside_r,
        outside: outside_r,
    })
}

// ---------------------------------------------------------------------------------------------
// batch learning speed-up

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FullSpaceRun {
    pub samples: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

pub struct SpeedupOutcome {
    pub net: BatchNet,
    pub bcts_samples: usize,
    pub expanded_samples: usize,
    /// N m, against the noise-free gravity term on the (expanded) training configurations.
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub full: Vec<FullSpaceRun>,
    /// Smallest full-space lattice reaching the BCTS test RMSE.
    pub matched: Option<usize>,
    /// matched / bcts_samples (largest tried size when unmatched).
    pub ratio: f64,
}

fn noisy_targets(model: &ManipulatorModel, qs: &[Vec<f64>], sd: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sd.max(0.0)).expect("finite sd");
    qs.iter()
        .map(|q| model.gravity_term(q).iter().map(|t| if sd > 0.0 { t + noise.sample(rng) } else { *t }).collect())
        .collect()
}

pub fn test_grid(model: &ManipulatorModel, per_axis: usize) -> Vec<Vec<f64>> {
    cell_centers(model, per_axis.max(1))
}

/// Trains on BCTS lattice samples expanded through the SPS, then on full-space lattices of
/// growing size, and reports the sample ratio at matched test RMSE.
pub fn run_speedup_experiment(
    cfg: &ExperimentConfig,
    model: &ManipulatorModel,
    sym: &SymmetryArtifact,
    seed: u64,
) -> Result<SpeedupOutcome> {
    let bc = &cfg.batch;
    let bcts = sym.bcts.as_ref().ok_or_else(|| Error::InvalidConfig("batch speed-up needs a BCTS".into()))?;
    let lo = model.q_min.clone();
    let hi = model.q_max.clone();
    let mut noise_rng = stream_rng(seed, stream::BATCH);
    let lattice_seed = stream_rng(seed, stream::LATTICE).gen::<u64>();
    let test_q = test_grid(model, bc.test_grid);
    let test_t: Vec<Vec<f64>> = test_q.iter().map(|q| model.gravity_term(q).as_slice().to_vec()).collect();

    let pts = lattice_sample(&lo, &hi, bc.bcts_samples * sym.sps.len(), lattice_seed);
    let inside: Vec<Vec<f64>> = pts.into_iter().filter(|q| bcts.contains(model, q)).collect();
    if inside.is_empty() {
        return Err(Error::InsufficientData("no lattice point inside the BCTS".into()));
    }
    let taus = noisy_targets(model, &inside, bc.noise_sd, &mut noise_rng);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (q, t) in inside.iter().zip(&taus) {
        for (qi, ti) in expand_sample(model, &sym.sps, q, t) {
            xs.push(qi.as_slice().to_vec());
            ys.push(ti.as_slice().to_vec());
        }
    }
    let net_cfg = crate::learner::BatchConfig { seed: bc.net.seed ^ seed, ..bc.net };
    let net = batch_train(&xs, &ys, &net_cfg)?;
    let clean: Vec<Vec<f64>> = xs.iter().map(|q| model.gravity_term(q).as_slice().to_vec()).collect();
    let train_rmse = torque_rmse(&net, &xs, &clean);
    let test_rmse = torque_rmse(&net, &test_q, &test_t);

    let mut full = Vec::new();
    let mut matched = None;
    for (k, &size) in bc.full_space_sizes.iter().enumerate() {
        let q = lattice_sample(&lo, &hi, size, lattice_seed.wrapping_add(k as u64 + 1));
        let t = noisy_targets(model, &q, bc.noise_sd, &mut noise_rng);
        let fnet = batch_train(&q, &t, &net_cfg)?;
        let clean: Vec<Vec<f64>> = q.iter().map(|x| model.gravity_term(x).as_slice().to_vec()).collect();
        let run = FullSpaceRun {
            samples: size,
            train_rmse: torque_rmse(&fnet, &q, &clean),
            test_rmse: torque_rmse(&fnet, &test_q, &test_t),
        };
        log::info!("full space {size}: test {:.4}", run.test_rmse);
        if matched.is_none() && run.test_rmse <= test_rmse {
            matched = Some(size);
        }
        full.push(run);
    }
    let denom = inside.len() as f64;
    let ratio = match matched {
        Some(m) => m as f64 / denom,
        None => bc.full_space_sizes.iter().copied().max().unwrap_or(0) as f64 / denom,
    };
    Ok(SpeedupOutcome {
        net,
        bcts_samples: inside.len(),
        expanded_samples: xs.len(),
        train_rmse,
        test_rmse,
        full,
        matched,
        ratio,
    })
}
