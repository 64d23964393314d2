//! Local Linear Map: Gaussian-weighted blend of affine experts `b_k + A_k (q - c_k)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::TrainingSample;
use crate::error::{Error, Result};
use crate::model::TorqueVector;

pub const LLM_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Blend {
    /// The k nearest prototypes.
    Nearest(usize),
    /// Every prototype (continuous prediction).
    All,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// rad; also the Gaussian kernel width.
    pub insertion_radius: f64,
    pub learning_rate: f64,
    /// Learning rate decays as `rate / sqrt(1 + t / decay_steps)`.
    pub decay: bool,
    pub decay_steps: f64,
    pub blend: Blend,
    /// Gradient for A taken in local coordinates `(q - c) / insertion_radius`, so the gain
    /// learns at the same pace as the offset inside a kernel.
    pub scaled_gain: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig { insertion_radius: 0.35, learning_rate: 0.1, decay: true, decay_steps: 1000.0, blend: Blend::Nearest(3), scaled_gain: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Prototype {
    pub center: Vec<f64>,
    /// Row-major n x n gain (N m / rad).
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Prototype {
    fn local(&self, q: &[f64], out: &mut [f64]) {
        let n = self.b.len();
        for r in 0..n {
            let mut y = self.b[r];
            for c in 0..n {
                y += self.a[r * n + c] * (q[c] - self.center[c]);
            }
            out[r] = y;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LocalLinearMap {
    pub version: u32,
    pub n: usize,
    pub prototypes: Vec<Prototype>,
    pub config: LlmConfig,
    /// Updates applied so far.
    pub t: u64,
}

impl LocalLinearMap {
    /// Single prototype at home with zero gain: predicts `tau_home` everywhere.
    pub fn init(tau_home: &[f64], q_home: &[f64], config: LlmConfig) -> Self {
        let n = q_home.len();
        LocalLinearMap {
            version: LLM_VERSION,
            n,
            prototypes: vec![Prototype { center: q_home.to_vec(), a: vec![0.0; n * n], b: tau_home.to_vec() }],
            config,
            t: 0,
        }
    }

    /// Selected prototypes with normalized kernel weights.
    fn activations(&self, q: &[f64]) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = self
            .prototypes
            .iter()
            .enumerate()
            .map(|(k, p)| (k, p.center.iter().zip(q).map(|(c, x)| (c - x) * (c - x)).sum::<f64>()))
            .collect();
        if let Blend::Nearest(k) = self.config.blend {
            let k = k.max(1).min(d.len());
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                d.truncate(k);
            }
            d.sort_by_key(|x| x.0);
        }
        let dmin = d.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let s2 = 2.0 * self.config.insertion_radius * self.config.insertion_radius;
        let mut total = 0.0;
        for x in d.iter_mut() {
            // shift by the nearest distance so far-away queries do not underflow
            x.1 = (-(x.1 - dmin) / s2).exp();
            total += x.1;
        }
        for x in d.iter_mut() {
            x.1 /= total;
        }
        d
    }

    pub fn predict(&self, q: &[f64]) -> TorqueVector {
        let acts = self.activations(q);
        self.blend(q, &acts)
    }

    fn blend(&self, q: &[f64], acts: &[(usize, f64)]) -> TorqueVector {
        let mut out = DVector::zeros(self.n);
        let mut buf = vec![0.0; self.n];
        for &(k, w) in acts {
            self.prototypes[k].local(q, &mut buf);
            for r in 0..self.n {
                out[r] += w * buf[r];
            }
        }
        out
    }

    pub fn nearest_distance(&self, q: &[f64]) -> f64 {
        self.prototypes
            .iter()
            .map(|p| p.center.iter().zip(q).map(|(c, x)| (c - x) * (c - x)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    pub fn current_rate(&self) -> f64 {
        if self.config.decay {
            self.config.learning_rate / (1.0 + self.t as f64 / self.config.decay_steps).sqrt()
        } else {
            self.config.learning_rate
        }
    }

    /// One weighted gradient step on `w |tau+ - G^(q+)|^2`, inserting a prototype at `q+`
    /// first when it is farther than the insertion radius from every center.
    pub fn update(&mut self, s: &TrainingSample) {
        let q = s.q_plus.as_slice();
        if s.weight <= 0.0 {
            return;
        }
        if self.nearest_distance(q) > self.config.insertion_radius {
            let y = self.predict(q);
            let nearest = self.nearest_index(q);
            let a = self.prototypes[nearest].a.clone();
            self.prototypes.push(Prototype { center: q.to_vec(), a, b: y.as_slice().to_vec() });
        }
        let rate = self.current_rate() * s.weight;
        self.t += 1;
        let acts = self.activations(q);
        let e = &s.tau_plus - self.blend(q, &acts);
        let n = self.n;
        let r2 = self.config.insertion_radius * self.config.insertion_radius;
        let gain = if self.config.scaled_gain { 1.0 / r2 } else { 1.0 };
        for (k, phi) in acts {
            let p = &mut self.prototypes[k];
            let g = rate * phi;
            for r in 0..n {
                p.b[r] += g * e[r];
                for c in 0..n {
                    p.a[r * n + c] += g * gain * e[r] * (q[c] - p.center[c]);
                }
            }
        }
    }

    fn nearest_index(&self, q: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, p) in self.prototypes.iter().enumerate() {
            let d: f64 = p.center.iter().zip(q).map(|(c, x)| (c - x) * (c - x)).sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LocalLinearMap = serde_json::from_str(s)?;
        if m.version != LLM_VERSION {
            return Err(Error::Version(m.version));
        }
        Ok(m)
    }
}
