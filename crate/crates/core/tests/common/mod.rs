#![allow(dead_code)]

use std::path::PathBuf;

use isl::model::ManipulatorModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ROBOTS: [&str; 6] = ["pendulum_1r", "planar_2r", "planar_2r_free", "arm_3r", "arm_3r_limited", "arm_4r"];

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn robot(name: &str) -> ManipulatorModel {
    ManipulatorModel::load(configs_dir().join("robots").join(format!("{name}.toml"))).unwrap()
}

pub fn experiment(name: &str) -> PathBuf {
    configs_dir().join("experiments").join(format!("{name}.toml"))
}

pub fn random_q(m: &ManipulatorModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m.n()).map(|i| rng.gen_range(m.q_min[i]..=m.q_max[i])).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fourth-order central difference of the potential energy.
pub fn fd_gravity(m: &ManipulatorModel, q: &[f64], h: f64) -> Vec<f64> {
    (0..m.n())
        .map(|i| {
            let at = |s: f64| {
                let mut x = q.to_vec();
                x[i] += s;
                m.potential_energy(&x)
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}
