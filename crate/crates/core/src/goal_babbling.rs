//! Modified online goal babbling on the inverse statics mapping.
//!
//! Each step queries the learner at a configuration target, adds correlated exploration noise,
//! clips the torque into the SST, lets the plant settle and learns from the observed rest pose.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::learner::{LlmConfig, LocalLinearMap, TrainingSample};
use crate::model::{Configuration, ManipulatorModel, Plant, SettleParams, SettleStatus, TorqueVector};
use crate::sst::SstEstimate;

/// PRNG stream ids (ChaCha stream per purpose, all from the run seed).
pub mod stream {
    pub const NOISE: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const DIRECTION: u64 = 3;
    pub const PROFILE: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const LATTICE: u64 = 6;
    pub const SST: u64 = 7;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GoalBabblingConfig {
    pub goals: Vec<Vec<f64>>,
    /// Intermediate targets per goal segment.
    pub l: usize,
    /// Passes over the goal set.
    pub n_iter: usize,
    pub p_home: f64,
    /// N m.
    pub noise_amplitude: f64,
    /// Steps.
    pub noise_timescale: f64,
    pub shuffle_goals: bool,
    pub settle: SettleParams,
    pub llm: LlmConfig,
}

impl Default for GoalBabblingConfig {
    fn default() -> Self {
        GoalBabblingConfig {
            goals: Vec::new(),
            l: 20,
            n_iter: 1,
            p_home: 1e-4,
            noise_amplitude: 0.05,
            noise_timescale: 50.0,
            shuffle_goals: true,
            settle: SettleParams::default(),
            llm: LlmConfig::default(),
        }
    }
}

/// Linear path from `from` (exclusive) to `to` (inclusive) in `l` steps.
pub fn intermediate_targets(from: &[f64], to: &[f64], l: usize) -> Vec<Configuration> {
    let l = l.max(1);
    (1..=l)
        .map(|k| {
            let s = k as f64 / l as f64;
            DVector::from_iterator(from.len(), from.iter().zip(to).map(|(a, b)| a + s * (b - a)))
        })
        .collect()
}

/// Exploration noise `sigma = E q* + e` whose entries follow reflected mean-reverting walks.
#[derive(Clone, Debug)]
pub struct NoiseState {
    pub e_mat: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    pub amplitude: f64,
    pub timescale: f64,
    rng: ChaCha8Rng,
}

impl NoiseState {
    pub fn new(n: usize, amplitude: f64, timescale: f64, rng: ChaCha8Rng) -> Self {
        NoiseState { e_mat: DMatrix::zeros(n, n), e_vec: DVector::zeros(n), amplitude, timescale, rng }
    }

    pub fn sample(&mut self, q_star: &[f64]) -> TorqueVector {
        let q = DVector::from_column_slice(q_star);
        let out = &self.e_mat * q + &self.e_vec;
        self.advance();
        out
    }

    fn advance(&mut self) {
        if self.amplitude == 0.0 {
            return;
        }
        let rate = 1.0 / self.timescale.max(1.0);
        let sd = self.amplitude * rate.sqrt();
        let bound = 3.0 * self.amplitude;
        let rng = &mut self.rng;
        let mut walk = |x: &mut f64| {
            let z: f64 = rng.sample(StandardNormal);
            let mut y = *x - rate * *x + sd * z;
            while y.abs() > bound {
                y = if y > bound { 2.0 * bound - y } else { -2.0 * bound - y };
            }
            *x = y;
        };
        self.e_mat.iter_mut().for_each(&mut walk);
        self.e_vec.iter_mut().for_each(&mut walk);
    }
}

/// Direction agreement weight from displacement vectors; 0 when either displacement vanishes.
pub fn weight_from_displacements(intended: &[f64], observed: &[f64]) -> f64 {
    let dot: f64 = intended.iter().zip(observed).map(|(a, b)| a * b).sum();
    let na = intended.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = observed.iter().map(|a| a * a).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (0.5 * (1.0 + dot / (na * nb))).clamp(0.0, 1.0)
}

pub fn weight_dir(q_star_t: &[f64], q_star_prev: &[f64], q_plus_t: &[f64], q_plus_prev: &[f64]) -> f64 {
    let a: Vec<f64> = q_star_t.iter().zip(q_star_prev).map(|(x, y)| x - y).collect();
    let b: Vec<f64> = q_plus_t.iter().zip(q_plus_prev).map(|(x, y)| x - y).collect();
    weight_from_displacements(&a, &b)
}

/// Maps one observed sample to its symmetric images (including itself).
pub type Expander = Box<dyn Fn(&Configuration, &TorqueVector) -> Vec<(Configuration, TorqueVector)> + Send + Sync>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub q_star: Vec<f64>,
    pub tau_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    pub tau_pre_clip: Vec<f64>,
    pub tau_exec: Vec<f64>,
    pub clipped: bool,
    pub home_target: bool,
    pub status: SettleStatus,
    pub q_plus: Vec<f64>,
    pub w_dir: f64,
    /// |q+ - q*| in rad.
    pub error: f64,
    pub direction_change: bool,
    /// Samples handed to the learner (after symmetric expansion).
    pub learned: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
}

impl RunLog {
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut h = vec!["step".to_string()];
        for name in ["q_star", "tau_hat", "sigma", "tau_pre_clip", "tau_exec", "q_plus"] {
            h.extend((0..n).map(|i| format!("{name}_{i}")));
        }
        h.extend(
            ["clipped", "home_target", "status", "w_dir", "error", "direction_change", "learned"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.steps.iter().map(|s| {
            let mut r = vec![s.step.to_string()];
            for v in [&s.q_star, &s.tau_hat, &s.sigma, &s.tau_pre_clip, &s.tau_exec, &s.q_plus] {
                r.extend(v.iter().map(|x| format!("{x:e}")));
            }
            r.push((s.clipped as u8).to_string());
            r.push((s.home_target as u8).to_string());
            r.push(format!("{:?}", s.status));
            r.push(format!("{:e}", s.w_dir));
            r.push(format!("{:e}", s.error));
            r.push((s.direction_change as u8).to_string());
            r.push(s.learned.to_string());
            r
        })
    }
}

/// Online babbling state: plant, noise, learner and the previous target/observation.
pub struct Babbler<'a> {
    pub model: &'a ManipulatorModel,
    pub sst: &'a SstEstimate,
    pub plant: Plant<'a>,
    pub noise: NoiseState,
    pub learner: LocalLinearMap,
    pub settle: SettleParams,
    pub prev_target: Configuration,
    pub prev_obs: Configuration,
    pub expander: Option<Expander>,
    pub log: RunLog,
    pub record_log: bool,
    steps: usize,
}

impl<'a> Babbler<'a> {
    pub fn new(model: &'a ManipulatorModel, sst: &'a SstEstimate, cfg: &GoalBabblingConfig, seed: u64) -> Self {
        let home = model.home();
        let tau_home = model.gravity_term(home.as_slice());
        Babbler {
            model,
            sst,
            plant: Plant::new(model, home.clone()),
            noise: NoiseState::new(model.n(), cfg.noise_amplitude, cfg.noise_timescale, stream_rng(seed, stream::NOISE)),
            learner: LocalLinearMap::init(tau_home.as_slice(), home.as_slice(), cfg.llm),
            settle: cfg.settle,
            prev_target: home.clone(),
            prev_obs: home,
            expander: None,
            log: RunLog::default(),
            record_log: true,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Sends the arm home (rest at q_home).
    pub fn go_home(&mut self) {
        self.plant.reset(self.model.home());
        self.prev_obs = self.model.home();
    }

    /// One GBScheme step toward `q_star`.
    pub fn step(&mut self, q_star: &Configuration, home_target: bool) -> StepRecord {
        let tau_hat = self.learner.predict(q_star.as_slice());
        let sigma = self.noise.sample(q_star.as_slice());
        let tau_pre = &tau_hat + &sigma;
        let clipped = !self.sst.contains(tau_pre.as_slice());
        let tau_exec = if clipped {
            self.sst.project_to_boundary(tau_pre.as_slice()).expect("SST boundary built")
        } else {
            tau_pre.clone()
        };
        let out = self.plant.settle(tau_exec.as_slice(), &self.settle);
        let mut w = 0.0;
        let mut learned = 0;
        let q_plus = out.q_final.clone();
        if out.settled() {
            let d_star = self.model.difference(q_star.as_slice(), self.prev_target.as_slice());
            let d_obs = self.model.difference(q_plus.as_slice(), self.prev_obs.as_slice());
            w = weight_from_displacements(d_star.as_slice(), d_obs.as_slice());
            let samples = match &self.expander {
                Some(f) => f(&q_plus, &tau_exec),
                None => vec![(q_plus.clone(), tau_exec.clone())],
            };
            for (q, t) in samples {
                self.learner.update(&TrainingSample::new(t, q, w));
                learned += 1;
            }
            self.prev_obs = q_plus.clone();
        } else {
            log::debug!("step {} skipped: {:?}", self.steps, out.status);
            self.go_home();
        }
        self.prev_target = q_star.clone();
        let rec = StepRecord {
            step: self.steps,
            q_star: q_star.as_slice().to_vec(),
            tau_hat: tau_hat.as_slice().to_vec(),
            sigma: sigma.as_slice().to_vec(),
            tau_pre_clip: tau_pre.as_slice().to_vec(),
            tau_exec: tau_exec.as_slice().to_vec(),
            clipped,
            home_target,
            status: out.status,
            error: self.model.distance(q_plus.as_slice(), q_star.as_slice()),
            q_plus: q_plus.as_slice().to_vec(),
            w_dir: w,
            direction_change: false,
            learned,
        };
        self.steps += 1;
        if self.record_log {
            self.log.steps.push(rec.clone());
        }
        rec
    }
}

/// Full babbling run over the goal set. Returns the learner and the step log.
pub fn run_goal_babbling(
    model: &ManipulatorModel,
    sst: &SstEstimate,
    cfg: &GoalBabblingConfig,
    seed: u64,
) -> (LocalLinearMap, RunLog) {
    let mut b = Babbler::new(model, sst, cfg, seed);
    run_with(&mut b, cfg, seed, usize::MAX);
    (b.learner, b.log)
}

/// Target sequence of a babbling run: `(q*, home_target)` per step, goals visited in
/// (optionally shuffled) passes with `l` intermediate targets each, home substituted with
/// probability `p_home`.
pub struct Schedule {
    rng: ChaCha8Rng,
    goals: Vec<Configuration>,
    home: Configuration,
    l: usize,
    p_home: f64,
    shuffle: bool,
    passes_left: usize,
    order: Vec<usize>,
    from: Configuration,
    pending: std::collections::VecDeque<Configuration>,
}

impl Schedule {
    pub fn new(model: &ManipulatorModel, cfg: &GoalBabblingConfig, seed: u64) -> Self {
        let home = model.home();
        Schedule {
            rng: stream_rng(seed, stream::SCHEDULE),
            goals: cfg.goals.iter().map(|g| DVector::from_column_slice(g)).collect(),
            from: home.clone(),
            home,
            l: cfg.l,
            p_home: cfg.p_home,
            shuffle: cfg.shuffle_goals,
            passes_left: cfg.n_iter,
            order: Vec::new(),
            pending: Default::default(),
        }
    }
}

impl Iterator for Schedule {
    type Item = (Configuration, bool);

    fn next(&mut self) -> Option<Self::Item> {
        while self.pending.is_empty() {
            if self.order.is_empty() {
                if self.passes_left == 0 || self.goals.is_empty() {
                    return None;
                }
                self.passes_left -= 1;
                let mut order: Vec<usize> = (0..self.goals.len()).collect();
                if self.shuffle {
                    order.shuffle(&mut self.rng);
                }
                order.reverse();
                self.order = order;
            }
            let gi = self.order.pop().expect("nonempty");
            let goal = self.goals[gi].clone();
            self.pending.extend(intermediate_targets(self.from.as_slice(), goal.as_slice(), self.l));
            self.from = goal;
        }
        let target = self.pending.pop_front().expect("nonempty");
        let go_home = self.rng.gen::<f64>() < self.p_home;
        Some(if go_home { (self.home.clone(), true) } else { (target, false) })
    }
}

/// Drives an existing babbler through `cfg.n_iter` passes, stopping after `max_steps` steps.
pub fn run_with(b: &mut Babbler<'_>, cfg: &GoalBabblingConfig, seed: u64, max_steps: usize) {
    for (t, go_home) in Schedule::new(b.model, cfg, seed) {
        if b.steps() >= max_steps {
            return;
        }
        b.step(&t, go_home);
    }
}
