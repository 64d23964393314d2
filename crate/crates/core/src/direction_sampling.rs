//! Modified direction sampling: targets advance along random configuration-space directions and
//! the direction is redrawn when the observed motion turns against the intended one.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::goal_babbling::{stream, stream_rng, Babbler, Expander, GoalBabblingConfig, RunLog, StepRecord};
use crate::learner::{LlmConfig, LocalLinearMap};
use crate::model::{Configuration, ManipulatorModel, SettleParams};
use crate::sst::SstEstimate;

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StepNorm {
    /// `|| w o dq ||_2` (elementwise weights).
    #[default]
    Weighted,
    /// `| w^T dq |`.
    Projection,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DirectionSamplingConfig {
    /// rad.
    pub epsilon: f64,
    /// Per-joint weights; empty means all ones.
    pub w: Vec<f64>,
    pub step_norm: StepNorm,
    pub p_home: f64,
    pub redraw_after_home: bool,
    pub noise_amplitude: f64,
    pub noise_timescale: f64,
    pub settle: SettleParams,
    pub llm: LlmConfig,
}

impl Default for DirectionSamplingConfig {
    fn default() -> Self {
        DirectionSamplingConfig {
            epsilon: 0.02,
            w: Vec::new(),
            step_norm: StepNorm::Weighted,
            p_home: 1e-4,
            redraw_after_home: true,
            noise_amplitude: 0.05,
            noise_timescale: 50.0,
            settle: SettleParams::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl DirectionSamplingConfig {
    fn babbling(&self) -> GoalBabblingConfig {
        GoalBabblingConfig {
            noise_amplitude: self.noise_amplitude,
            noise_timescale: self.noise_timescale,
            settle: self.settle,
            llm: self.llm,
            p_home: self.p_home,
            ..GoalBabblingConfig::default()
        }
    }
}

pub fn step_scale(dq: &[f64], w: &[f64], norm: StepNorm) -> f64 {
    match norm {
        StepNorm::Weighted => dq.iter().zip(w).map(|(d, w)| (d * w) * (d * w)).sum::<f64>().sqrt(),
        StepNorm::Projection => dq.iter().zip(w).map(|(d, w)| d * w).sum::<f64>().abs(),
    }
}

/// `q*_t = q*_{t-1} + eps / scale(w, dq) * dq`.
pub fn advance_target(prev: &[f64], dq: &[f64], epsilon: f64, w: &[f64], norm: StepNorm) -> Configuration {
    let s = epsilon / step_scale(dq, w, norm);
    DVector::from_iterator(prev.len(), prev.iter().zip(dq).map(|(p, d)| p + s * d))
}

/// `alpha = (q*_t - q*_{t-1})^T (q+_t - q+_{t-1})`; negative means the motion deviates by more
/// than a right angle.
pub fn deviation_test(q_star_t: &[f64], q_star_prev: &[f64], q_plus_t: &[f64], q_plus_prev: &[f64]) -> f64 {
    (0..q_star_t.len()).map(|i| (q_star_t[i] - q_star_prev[i]) * (q_plus_t[i] - q_plus_prev[i])).sum()
}

/// Uniform direction on the unit sphere, redrawn while its step scale is degenerate.
pub fn random_direction(rng: &mut ChaCha8Rng, w: &[f64], norm: StepNorm) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..w.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let v: Vec<f64> = v.into_iter().map(|x| x / len).collect();
        if step_scale(&v, w, norm) >= 1e-9 {
            return v;
        }
    }
}

/// Where targets may go.
pub enum Region {
    /// Joint-limit box of the model (full-turn joints wrap).
    Limits,
    /// Arbitrary membership test inside the limit box, e.g. a BCTS.
    Set(Box<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl Region {
    fn contains(&self, model: &ManipulatorModel, q: &[f64]) -> bool {
        match self {
            Region::Limits => model.within_limits(q),
            Region::Set(f) => model.within_limits(q) && f(model.wrapped(&DVector::from_column_slice(q)).as_slice()),
        }
    }

    /// Last point of the segment `from -> to` inside the region (`from` assumed inside).
    fn clamp(&self, model: &ManipulatorModel, from: &Configuration, to: Configuration) -> (Configuration, bool) {
        if self.contains(model, to.as_slice()) {
            return (model.wrapped(&to), false);
        }
        if !self.contains(model, from.as_slice()) {
            return (model.wrapped(from), true);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let p = from + (&to - from) * mid;
            if self.contains(model, p.as_slice()) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (model.wrapped(&(from + (&to - from) * lo)), true)
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct DsCounters {
    pub direction_changes: usize,
    pub deviations: usize,
    pub home_targets: usize,
    pub resets: usize,
    pub clamps: usize,
}

pub struct DirectionSampler<'a> {
    pub babbler: Babbler<'a>,
    pub cfg: DirectionSamplingConfig,
    pub region: Region,
    pub direction: Vec<f64>,
    pub counters: DsCounters,
    w: Vec<f64>,
    last_target: Configuration,
    rng: ChaCha8Rng,
}

impl<'a> DirectionSampler<'a> {
    pub fn new(
        model: &'a ManipulatorModel,
        sst: &'a SstEstimate,
        cfg: &DirectionSamplingConfig,
        region: Region,
        expander: Option<Expander>,
        seed: u64,
    ) -> Self {
        let mut babbler = Babbler::new(model, sst, &cfg.babbling(), seed);
        babbler.expander = expander;
        let w = if cfg.w.is_empty() { vec![1.0; model.n()] } else { cfg.w.clone() };
        let mut rng = stream_rng(seed, stream::DIRECTION);
        let direction = random_direction(&mut rng, &w, cfg.step_norm);
        DirectionSampler {
            babbler,
            cfg: cfg.clone(),
            region,
            direction,
            counters: DsCounters::default(),
            w,
            last_target: model.home(),
            rng,
        }
    }

    fn redraw(&mut self) {
        self.direction = random_direction(&mut self.rng, &self.w, self.cfg.step_norm);
        self.counters.direction_changes += 1;
    }

    /// Next target: q_home with probability p_home, else one step along the direction, kept in
    /// the region. Returns (target, home, clamped).
    pub fn next_target(&mut self) -> (Configuration, bool, bool) {
        let model = self.babbler.model;
        if self.rng.gen::<f64>() < self.cfg.p_home {
            return (model.home(), true, false);
        }
        let raw = advance_target(self.last_target.as_slice(), &self.direction, self.cfg.epsilon, &self.w, self.cfg.step_norm);
        let (t, clamped) = self.region.clamp(model, &self.last_target, raw);
        (t, false, clamped)
    }

    pub fn step(&mut self) -> StepRecord {
        let model = self.babbler.model;
        let (target, home, clamped) = self.next_target();
        let q_star_prev = self.last_target.clone();
        let q_plus_prev = self.babbler.prev_obs.clone();
        let mut rec = self.babbler.step(&target, home);
        let reset = !rec.status.eq(&crate::model::SettleStatus::Settled);
        self.last_target = target.clone();
        if home {
            self.counters.home_targets += 1;
        }
        if clamped {
            self.counters.clamps += 1;
        }
        if reset {
            self.counters.resets += 1;
            self.last_target = model.home();
        }
        let mut change = false;
        if (reset || home) && self.cfg.redraw_after_home {
            change = true;
        } else if !reset {
            let ds = model.difference(target.as_slice(), q_star_prev.as_slice());
            let dp = model.difference(&rec.q_plus, q_plus_prev.as_slice());
            let alpha = deviation_test(ds.as_slice(), &vec![0.0; ds.len()], dp.as_slice(), &vec![0.0; dp.len()]);
            if alpha < 0.0 {
                self.counters.deviations += 1;
                self.return_to(&q_plus_prev);
                self.last_target = q_star_prev;
                change = true;
            } else if clamped {
                // a target pinned to the region boundary cannot advance any further
                change = true;
            }
        }
        if change {
            self.redraw();
        }
        rec.direction_change = change;
        if let Some(last) = self.babbler.log.steps.last_mut() {
            last.direction_change = change;
        }
        rec
    }

    /// Commands the learner's estimate for `q` and settles there; not a training sample.
    fn return_to(&mut self, q: &Configuration) {
        let tau = self.babbler.learner.predict(q.as_slice());
        let out = self.babbler.plant.settle(tau.as_slice(), &self.babbler.settle);
        if out.settled() {
            self.babbler.prev_obs = out.q_final;
        } else {
            self.babbler.go_home();
            self.last_target = self.babbler.model.home();
        }
    }
}

pub fn run_direction_sampling(
    model: &ManipulatorModel,
    sst: &SstEstimate,
    cfg: &DirectionSamplingConfig,
    region: Region,
    expander: Option<Expander>,
    seed: u64,
    sample_budget: usize,
) -> (LocalLinearMap, RunLog, DsCounters) {
    let mut ds = DirectionSampler::new(model, sst, cfg, region, expander, seed);
    for _ in 0..sample_budget {
        ds.step();
    }
    (ds.babbler.learner, ds.babbler.log, ds.counters)
}
