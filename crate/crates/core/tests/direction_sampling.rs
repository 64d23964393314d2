mod common;

use common::*;
use isl::direction_sampling::*;
use isl::harness::experiments::{build_sst, run_direction_sampling_experiment};
use isl::harness::ExperimentConfig;
use isl::learner::LocalLinearMap;
use isl::model::SettleStatus;
use proptest::prelude::*;

fn smoke() -> (ExperimentConfig, isl::model::ManipulatorModel, isl::sst::SstEstimate) {
    let cfg = ExperimentConfig::load(experiment("smoke")).unwrap();
    let m = cfg.robot_model().unwrap();
    let sst = build_sst(&cfg, &m, 0).unwrap();
    (cfg, m, sst)
}

#[test]
fn zero_budget_leaves_learner_untouched() {
    let (cfg, m, sst) = smoke();
    let p = &cfg.direction_sampling.params;
    let (llm, log, counters) = run_direction_sampling(&m, &sst, p, Region::Limits, None, 0, 0);
    assert!(log.steps.is_empty());
    assert_eq!(counters, DsCounters::default());
    let home = m.home();
    assert_eq!(llm, LocalLinearMap::init(m.gravity_term(home.as_slice()).as_slice(), home.as_slice(), p.llm));
}

#[test]
fn step_lengths_and_redraw_rule() {
    let (cfg, m, sst) = smoke();
    let params = DirectionSamplingConfig { p_home: 0.02, noise_amplitude: 0.3, ..cfg.direction_sampling.params.clone() };
    let mut ds = DirectionSampler::new(&m, &sst, &params, Region::Limits, None, 5);
    let eps = params.epsilon;
    let mut prev: Option<(Vec<f64>, bool)> = None;
    let (mut full_steps, mut events) = (0, 0);
    for _ in 0..800 {
        let before = ds.counters;
        let dir = ds.direction.clone();
        let rec = ds.step();
        let c = ds.counters;
        let deviated = c.deviations > before.deviations;
        let reset = c.resets > before.resets;
        let clamped = c.clamps > before.clamps;
        let redraw = deviated || reset || rec.home_target || clamped;
        assert_eq!(rec.direction_change, redraw, "step {}", rec.step);
        assert_eq!(c.direction_changes - before.direction_changes, redraw as usize);
        if !redraw {
            assert_eq!(ds.direction, dir);
        }
        events += redraw as usize;
        // after an uneventful step the next target continues from the logged one
        if let Some((p, ok)) = &prev {
            if *ok && !rec.home_target && !clamped {
                let d = m.difference(&rec.q_star, p).norm();
                assert!((d - eps).abs() <= 1e-12, "step {} moved {d}", rec.step);
                full_steps += 1;
            }
        }
        prev = Some((rec.q_star.clone(), !redraw));
    }
    assert!(full_steps > 400, "{full_steps}");
    assert!(events > 0);
}

#[test]
fn visited_cells_are_reproducible() {
    let (cfg, m, sst) = smoke();
    let a = run_direction_sampling_experiment(&cfg, &m, &sst, None, 4, true).unwrap();
    let b = run_direction_sampling_experiment(&cfg, &m, &sst, None, 4, true).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!((a.cells_hit, a.cells_region), (b.cells_hit, b.cells_region));
    assert!(a.cells_hit > 0);
    assert!(a.log.steps.iter().any(|s| s.status == SettleStatus::Settled));
}

#[test]
fn targets_stay_in_region() {
    let (cfg, m, sst) = smoke();
    let home = m.home();
    // a small box around home as the exploration region
    let inside = move |q: &[f64]| q.iter().zip(home.iter()).all(|(a, b)| (a - b).abs() <= 0.15);
    let params = DirectionSamplingConfig { p_home: 0.0, ..cfg.direction_sampling.params.clone() };
    let mut ds = DirectionSampler::new(&m, &sst, &params, Region::Set(Box::new(inside.clone())), None, 8);
    for _ in 0..400 {
        let rec = ds.step();
        assert!(inside(&rec.q_star), "{:?}", rec.q_star);
    }
    assert!(ds.counters.clamps > 0);
}

proptest! {
    #[test]
    fn weighted_step_has_length_epsilon(
        d in prop::collection::vec(-1.0f64..1.0, 3),
        w in prop::collection::vec(0.1f64..3.0, 3),
        eps in 0.001f64..0.5,
    ) {
        prop_assume!(step_scale(&d, &w, StepNorm::Weighted) > 1e-6);
        let prev = [0.2, -0.1, 0.4];
        let t = advance_target(&prev, &d, eps, &w, StepNorm::Weighted);
        let step: Vec<f64> = (0..3).map(|i| t[i] - prev[i]).collect();
        // eps in the weighted norm, eps / |w.d| * |d| in the Euclidean one
        prop_assert!((step_scale(&step, &w, StepNorm::Weighted) - eps).abs() <= 1e-12);
        let expect = eps / step_scale(&d, &w, StepNorm::Weighted) * d.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((step.iter().map(|x| x * x).sum::<f64>().sqrt() - expect).abs() <= 1e-12);
    }
}
