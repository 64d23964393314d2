//! One-hidden-layer tanh network trained full-batch with Adam.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TorqueVector;

const MAGIC: &[u8; 8] = b"ISLNET01";

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Stop once the training RMSE reaches this value.
    pub target_rmse: Option<f64>,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig { hidden: 20, epochs: 5000, learning_rate: 0.01, beta1: 0.9, beta2: 0.999, seed: 0, target_rmse: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNet {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    /// Inputs are mapped to `(q - center) / scale` before the first layer.
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Flat parameters: W1 (hidden x n_in, row-major), b1, W2 (n_out x hidden), b2.
    pub params: Vec<f64>,
}

impl BatchNet {
    pub fn new(n_in: usize, hidden: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; hidden * n_in + hidden + n_out * hidden + n_out];
        let l1 = (6.0 / (n_in + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + n_out) as f64).sqrt();
        for w in &mut params[..hidden * n_in] {
            *w = rng.gen_range(-l1..l1);
        }
        let o = hidden * n_in + hidden;
        for w in &mut params[o..o + n_out * hidden] {
            *w = rng.gen_range(-l2..l2);
        }
        BatchNet { n_in, hidden, n_out, center: vec![0.0; n_in], scale: vec![1.0; n_in], params }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.n_in;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_out * self.hidden;
        (b1, w2, b2)
    }

    fn input(&self, q: &[f64], x: &mut [f64]) {
        for i in 0..self.n_in {
            x[i] = (q[i] - self.center[i]) / self.scale[i];
        }
    }

    pub fn predict(&self, q: &[f64]) -> TorqueVector {
        let mut x = vec![0.0; self.n_in];
        let mut h = vec![0.0; self.hidden];
        let mut y = vec![0.0; self.n_out];
        self.input(q, &mut x);
        self.forward(&x, &mut h, &mut y);
        DVector::from_vec(y)
    }

    fn forward(&self, x: &[f64], h: &mut [f64], y: &mut [f64]) {
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        for j in 0..self.hidden {
            let mut a = p[ob1 + j];
            for i in 0..self.n_in {
                a += p[j * self.n_in + i] * x[i];
            }
            h[j] = a.tanh();
        }
        for k in 0..self.n_out {
            let mut a = p[ob2 + k];
            for j in 0..self.hidden {
                a += p[ow2 + k * self.hidden + j] * h[j];
            }
            y[k] = a;
        }
    }

    /// Mean squared error over all outputs and its gradient w.r.t. `params`.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[Vec<f64>], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (ob1, ow2, ob2) = self.offsets();
        let norm = 1.0 / (xs.len() * self.n_out) as f64;
        let mut x = vec![0.0; self.n_in];
        let mut h = vec![0.0; self.hidden];
        let mut y = vec![0.0; self.n_out];
        let mut dh = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for (q, t) in xs.iter().zip(ys) {
            self.input(q, &mut x);
            self.forward(&x, &mut h, &mut y);
            dh.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..self.n_out {
                let e = y[k] - t[k];
                loss += e * e;
                let dy = 2.0 * e * norm;
                grad[ob2 + k] += dy;
                for j in 0..self.hidden {
                    grad[ow2 + k * self.hidden + j] += dy * h[j];
                    dh[j] += dy * self.params[ow2 + k * self.hidden + j];
                }
            }
            for j in 0..self.hidden {
                let da = dh[j] * (1.0 - h[j] * h[j]);
                grad[ob1 + j] += da;
                for i in 0..self.n_in {
                    grad[j * self.n_in + i] += da * x[i];
                }
            }
        }
        loss * norm
    }

    pub fn rmse(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
        let mut s = 0.0;
        for (q, t) in xs.iter().zip(ys) {
            let y = self.predict(q);
            s += (0..self.n_out).map(|k| (y[k] - t[k]).powi(2)).sum::<f64>();
        }
        (s / (xs.len() * self.n_out) as f64).sqrt()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [self.n_in, self.hidden, self.n_out] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.center.iter().chain(&self.scale).chain(&self.params) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.len() < 20 || &b[..8] != MAGIC {
            return Err(Error::InvalidConfig("not a network checkpoint".into()));
        }
        let u = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as usize;
        let (n_in, hidden, n_out) = (u(8), u(12), u(16));
        let np = hidden * n_in + hidden + n_out * hidden + n_out;
        let count = 2 * n_in + np;
        if b.len() != 20 + 8 * count {
            return Err(Error::InvalidConfig("truncated network checkpoint".into()));
        }
        let vals: Vec<f64> = b[20..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(BatchNet {
            n_in,
            hidden,
            n_out,
            center: vals[..n_in].to_vec(),
            scale: vals[n_in..2 * n_in].to_vec(),
            params: vals[2 * n_in..].to_vec(),
        })
    }
}

/// Full-batch Adam on the mean squared error. Inputs are normalized to the sample box.
pub fn batch_train(qs: &[Vec<f64>], taus: &[Vec<f64>], cfg: &BatchConfig) -> Result<BatchNet> {
    if qs.is_empty() || qs.len() != taus.len() {
        return Err(Error::InsufficientData("batch training needs matching, non-empty data".into()));
    }
    let n_in = qs[0].len();
    let n_out = taus[0].len();
    let mut net = BatchNet::new(n_in, cfg.hidden, n_out, cfg.seed);
    for i in 0..n_in {
        let lo = qs.iter().map(|q| q[i]).fold(f64::INFINITY, f64::min);
        let hi = qs.iter().map(|q| q[i]).fold(f64::NEG_INFINITY, f64::max);
        net.center[i] = 0.5 * (lo + hi);
        net.scale[i] = (0.5 * (hi - lo)).max(1e-9);
    }
    let np = net.params.len();
    let mut grad = vec![0.0; np];
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for epoch in 1..=cfg.epochs {
        let loss = net.loss_and_grad(qs, taus, &mut grad);
        if !loss.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(t) = cfg.target_rmse {
            if loss.sqrt() <= t {
                break;
            }
        }
        let c1 = 1.0 - b1.powi(epoch as i32);
        let c2 = 1.0 - b2.powi(epoch as i32);
        for k in 0..np {
            m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
            v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
            net.params[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-8);
        }
    }
    Ok(net)
}
