//! Primary symmetries of the gravity term.
//!
//! Level sets of G are probed with torque profiles, configurations are tracked across a small
//! lattice of target torques, affine relations `q_s = K q_r + d` are fitted per track pair and
//! snapped, and the snapped relations are closed into a finite group (SPS). The group yields a
//! fundamental domain (BCTS) and multiplies training samples.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal_babbling::{stream, stream_rng};
use crate::model::{solve_static, Configuration, ManipulatorModel, Plant, SettleParams, TorqueVector};

/// Diagonal of a sign matrix, entries +1 / -1.
pub type SignMatrix = Vec<i8>;

/// All 2^n sign matrices; bit k of the index flips entry k. Index 0 is the identity.
pub fn sign_variants(n: usize) -> Vec<SignMatrix> {
    (0..1usize << n).map(|m| (0..n).map(|k| if m >> k & 1 == 1 { -1 } else { 1 }).collect()).collect()
}

pub fn apply_sign(s: &[i8], tau: &[f64]) -> TorqueVector {
    DVector::from_iterator(tau.len(), tau.iter().zip(s).map(|(t, &d)| t * d as f64))
}

fn sign_mul(a: &[i8], b: &[i8]) -> SignMatrix {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

// ---------------------------------------------------------------------------------------------
// torque profiles

/// Cubic spline with zero end slopes through `(x_i, y_i)`.
#[derive(Clone, Debug)]
pub struct ClampedSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl ClampedSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let k = x.len();
        assert!(k >= 2 && y.len() == k);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut a = DMatrix::zeros(k, k);
        let mut r = DVector::zeros(k);
        a[(0, 0)] = 2.0 * h[0];
        a[(0, 1)] = h[0];
        r[0] = 6.0 * ((y[1] - y[0]) / h[0]);
        for i in 1..k - 1 {
            a[(i, i - 1)] = h[i - 1];
            a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
            a[(i, i + 1)] = h[i];
            r[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        a[(k - 1, k - 2)] = h[k - 2];
        a[(k - 1, k - 1)] = 2.0 * h[k - 2];
        r[k - 1] = -6.0 * ((y[k - 1] - y[k - 2]) / h[k - 2]);
        let m = a.lu().solve(&r).expect("spline system is diagonally dominant");
        ClampedSpline { x: x.to_vec(), y: y.to_vec(), m: m.as_slice().to_vec() }
    }

    fn interval(&self, t: f64) -> usize {
        let mut i = 0;
        while i + 2 < self.x.len() && t > self.x[i + 1] {
            i += 1;
        }
        i
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let (x0, x1, h) = (self.x[i], self.x[i + 1], self.x[i + 1] - self.x[i]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        m0 * (x1 - t).powi(3) / (6.0 * h)
            + m1 * (t - x0).powi(3) / (6.0 * h)
            + (self.y[i] / h - m0 * h / 6.0) * (x1 - t)
            + (self.y[i + 1] / h - m1 * h / 6.0) * (t - x0)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let (x0, x1, h) = (self.x[i], self.x[i + 1], self.x[i + 1] - self.x[i]);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        -m0 * (x1 - t).powi(2) / (2.0 * h) + m1 * (t - x0).powi(2) / (2.0 * h) - (self.y[i] / h - m0 * h / 6.0)
            + (self.y[i + 1] / h - m1 * h / 6.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TorqueProfile {
    pub samples: Vec<TorqueVector>,
    pub start_sign: SignMatrix,
    pub end_sign: SignMatrix,
    /// Zero end derivatives imposed on the spline.
    pub clamped_ends: bool,
}

/// Spline profile of `n_s` samples from `s1 tau*` through `intermediates` to `s2 tau*`.
pub fn generate_torque_profile(
    tau_star: &[f64],
    n_s: usize,
    s1: &[i8],
    s2: &[i8],
    intermediates: &[TorqueVector],
) -> TorqueProfile {
    assert!(n_s >= intermediates.len() + 2 && n_s >= 4);
    let n = tau_star.len();
    let start = apply_sign(s1, tau_star);
    let end = apply_sign(s2, tau_star);
    let mut knots: Vec<TorqueVector> = vec![start];
    knots.extend(intermediates.iter().cloned());
    knots.push(end);
    let m = knots.len() - 1;
    let last = (n_s - 1) as f64;
    let xs: Vec<f64> = (0..=m).map(|k| last * k as f64 / m as f64).collect();
    let splines: Vec<ClampedSpline> =
        (0..n).map(|j| ClampedSpline::new(&xs, &knots.iter().map(|t| t[j]).collect::<Vec<_>>())).collect();
    let mut samples: Vec<TorqueVector> =
        (0..n_s).map(|k| DVector::from_iterator(n, splines.iter().map(|s| s.eval(k as f64)))).collect();
    // pin the endpoints exactly
    samples[0] = knots[0].clone();
    samples[n_s - 1] = knots[m].clone();
    TorqueProfile { samples, start_sign: s1.to_vec(), end_sign: s2.to_vec(), clamped_ends: true }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// Profile length is uniform over `n_min..=n_max` samples.
    pub n_min: usize,
    pub n_max: usize,
    pub intermediates_min: usize,
    pub intermediates_max: usize,
    /// Intermediate torques are uniform over this multiple of the SST bounding box.
    pub box_scale: f64,
    /// Seconds each profile sample is held.
    pub sample_duration: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { n_min: 8, n_max: 40, intermediates_min: 1, intermediates_max: 3, box_scale: 1.2, sample_duration: 0.05 }
    }
}

/// Draws length, sign variants and intermediate torques, then builds the spline.
pub fn draw_torque_profile(
    tau_star: &[f64],
    p_tau: (&[f64], &[f64]),
    cfg: &ProfileConfig,
    rng: &mut ChaCha8Rng,
) -> TorqueProfile {
    let n = tau_star.len();
    let variants = sign_variants(n);
    let n_s = rng.gen_range(cfg.n_min.max(4)..=cfg.n_max.max(cfg.n_min.max(4)));
    let k = rng.gen_range(cfg.intermediates_min..=cfg.intermediates_max).min(n_s - 2);
    let (lo, hi) = p_tau;
    let inter: Vec<TorqueVector> = (0..k)
        .map(|_| {
            DVector::from_iterator(
                n,
                (0..n).map(|j| {
                    let c = 0.5 * (lo[j] + hi[j]);
                    let h = 0.5 * (hi[j] - lo[j]) * cfg.box_scale;
                    rng.gen_range(c - h..=c + h)
                }),
            )
        })
        .collect();
    let s1 = variants[rng.gen_range(0..variants.len())].clone();
    let s2 = variants[rng.gen_range(0..variants.len())].clone();
    generate_torque_profile(tau_star, n_s, &s1, &s2, &inter)
}

// ---------------------------------------------------------------------------------------------
// discovery

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub n_pr: usize,
    pub profile: ProfileConfig,
    /// rad; configurations closer than this (on the torus) are merged.
    pub merge_radius: f64,
    /// Complete each level set by static probing after the profiles.
    pub complete: bool,
    /// Coarse seed grid per joint for static probing.
    pub probe_grid: usize,
    /// Plant states sampled every this many integration steps serve as probing seeds.
    pub seed_stride: usize,
    pub max_trajectory_seeds: usize,
    pub settle: SettleParams,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            n_pr: 200,
            profile: ProfileConfig::default(),
            merge_radius: 5e-3,
            complete: true,
            probe_grid: 8,
            seed_stride: 25,
            max_trajectory_seeds: 2000,
            settle: SettleParams { max_time: 20.0, ..SettleParams::default() },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LevelSetEntry {
    pub q: Vec<f64>,
    pub sign: SignMatrix,
    /// Reached by physical settling (otherwise found by static probing).
    pub settled: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct LevelSetRecord {
    pub tau_star: Vec<f64>,
    pub entries: Vec<LevelSetEntry>,
    pub profiles: usize,
    pub limit_violations: usize,
    pub timeouts: usize,
    /// Torques held at settled configurations, for SST refinement.
    #[serde(default)]
    pub observed_torques: Vec<Vec<f64>>,
}

impl LevelSetRecord {
    pub fn settled_count(&self) -> usize {
        self.entries.iter().filter(|e| e.settled).count()
    }

    fn insert(&mut self, model: &ManipulatorModel, q: Configuration, sign: &[i8], settled: bool, radius: f64) -> bool {
        let q = model.wrapped(&q);
        for e in &mut self.entries {
            if e.sign == sign && model.distance(&e.q, q.as_slice()) < radius {
                e.settled |= settled;
                return false;
            }
        }
        self.entries.push(LevelSetEntry { q: q.as_slice().to_vec(), sign: sign.to_vec(), settled });
        true
    }
}

/// Runs the profile loop for one target torque, then (optionally) completes the level sets.
pub fn discover_sym(
    model: &ManipulatorModel,
    tau_star: &[f64],
    p_tau: (&[f64], &[f64]),
    cfg: &DiscoveryConfig,
    seed: u64,
) -> LevelSetRecord {
    let mut rng = stream_rng(seed, stream::PROFILE);
    let mut rec = LevelSetRecord { tau_star: tau_star.to_vec(), ..Default::default() };
    let mut plant = Plant::new(model, model.home());
    let hold = (cfg.profile.sample_duration / cfg.settle.dt).round().max(1.0) as usize;
    let mut seeds: Vec<Configuration> = Vec::new();
    let mut tick = 0usize;
    for _ in 0..cfg.n_pr {
        rec.profiles += 1;
        let prof = draw_torque_profile(tau_star, p_tau, &cfg.profile, &mut rng);
        let mut violated = false;
        'apply: for tau in &prof.samples {
            for _ in 0..hold {
                plant.step(tau.as_slice(), cfg.settle.dt);
                tick += 1;
                if tick % cfg.seed_stride == 0 {
                    seeds.push(plant.q.clone());
                }
                if !model.within_limits(plant.q.as_slice()) {
                    violated = true;
                    break 'apply;
                }
            }
        }
        if !violated {
            let end = prof.samples.last().unwrap().clone();
            let stride = cfg.seed_stride;
            let out = plant.settle_observed(end.as_slice(), &cfg.settle, |q| {
                tick += 1;
                if tick % stride == 0 {
                    seeds.push(q.clone());
                }
            });
            match out.status {
                crate::model::SettleStatus::Settled => {
                    rec.observed_torques.push(end.as_slice().to_vec());
                    rec.insert(model, out.q_final, &prof.end_sign, true, cfg.merge_radius);
                    continue;
                }
                crate::model::SettleStatus::LimitViolation => rec.limit_violations += 1,
                crate::model::SettleStatus::Timeout => rec.timeouts += 1,
            }
        } else {
            rec.limit_violations += 1;
        }
        plant.reset(model.home());
    }
    if cfg.complete {
        complete_level_sets(model, &mut rec, seeds, cfg);
    }
    rec
}

/// Static probing: Newton on `G(q) = s tau*` from trajectory, settled and grid seeds.
fn complete_level_sets(model: &ManipulatorModel, rec: &mut LevelSetRecord, trajectory: Vec<Configuration>, cfg: &DiscoveryConfig) {
    let n = model.n();
    let mut seeds: Vec<Configuration> = Vec::new();
    let stride = (trajectory.len() / cfg.max_trajectory_seeds.max(1)).max(1);
    seeds.extend(trajectory.into_iter().step_by(stride));
    seeds.extend(rec.entries.iter().map(|e| DVector::from_column_slice(&e.q)));
    let g = cfg.probe_grid.max(1);
    for idx in 0..g.pow(n as u32) {
        let mut rem = idx;
        seeds.push(DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let k = rem % g;
                rem /= g;
                model.q_min[i] + (k as f64 + 0.5) / g as f64 * (model.q_max[i] - model.q_min[i])
            }),
        ));
    }
    for sign in sign_variants(n) {
        let target = apply_sign(&sign, &rec.tau_star);
        for s in &seeds {
            if let Some(q) = solve_static(model, s, &target, 1e-10) {
                rec.insert(model, q, &sign, false, cfg.merge_radius);
            }
        }
    }
}

/// Target torques on a lattice of `shape` around `center`, spaced `spacing` per dimension.
pub fn target_lattice(center: &[f64], spacing: &[f64], shape: &[usize]) -> Vec<Vec<f64>> {
    let n = center.len();
    let total: usize = shape.iter().product();
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            (0..n)
                .map(|i| {
                    let k = rem % shape[i];
                    rem /= shape[i];
                    center[i] + (k as f64 - 0.5 * (shape[i] - 1) as f64) * spacing[i]
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------------------------
// correspondence and fitting

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// rad; farthest a configuration may move between lattice records and stay on its track.
    pub track_radius: f64,
    /// rad; class kept when the free affine fit residual is below this.
    pub class_tol: f64,
    pub min_support: usize,
    /// Snap K to integers and d to multiples of pi/2.
    pub snap: bool,
    pub snap_tol: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { track_radius: 0.25, class_tol: 1e-2, min_support: 3, snap: true, snap_tol: 1e-3 }
    }
}

/// One configuration followed across records; entries unwrapped against the reference record.
#[derive(Clone, Debug)]
pub struct Track {
    pub sign: SignMatrix,
    pub points: Vec<Option<Configuration>>,
}

/// Tracks are seeded from record 0 and continued by mutual nearest neighbours of equal sign.
pub fn build_tracks(model: &ManipulatorModel, records: &[LevelSetRecord], radius: f64) -> Vec<Track> {
    let Some(reference) = records.first() else { return Vec::new() };
    let mut tracks = Vec::new();
    for e in &reference.entries {
        let base = DVector::from_column_slice(&e.q);
        let mut points = Vec::with_capacity(records.len());
        for rec in records {
            let nearest = |q: &[f64], sign: &[i8], pool: &[LevelSetEntry]| -> Option<(usize, f64)> {
                pool.iter()
                    .enumerate()
                    .filter(|(_, c)| c.sign == sign)
                    .map(|(i, c)| (i, model.distance(&c.q, q)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            };
            let hit = nearest(&e.q, &e.sign, &rec.entries).and_then(|(i, d)| {
                let back = nearest(&rec.entries[i].q, &e.sign, &reference.entries)?;
                let mutual = reference.entries[back.0].q == e.q;
                (d < radius && mutual).then_some(i)
            });
            points.push(hit.map(|i| {
                let q = &rec.entries[i].q;
                &base + model.difference(q, base.as_slice())
            }));
        }
        tracks.push(Track { sign: e.sign.clone(), points });
    }
    tracks
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AffineFit {
    /// Row-major n x n.
    pub k: Vec<f64>,
    pub d: Vec<f64>,
    /// Largest coordinate residual over the support.
    pub max_residual: f64,
}

/// Least squares `q_s = K q_r + d`; None when the support is too small or degenerate.
pub fn fit_affine(qr: &[Configuration], qs: &[Configuration]) -> Option<AffineFit> {
    let n = qr.first()?.len();
    let m = qr.len();
    if m < n + 1 {
        return None;
    }
    let x = DMatrix::from_fn(m, n + 1, |r, c| if c < n { qr[r][c] } else { 1.0 });
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() < 1e-9 * smax.max(1.0) {
        return None;
    }
    let y = DMatrix::from_fn(m, n, |r, c| qs[r][c]);
    let beta = svd.solve(&y, 1e-12).ok()?;
    let pred = &x * &beta;
    let max_residual = (pred - y).amax();
    let mut k = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = beta[(j, i)];
        }
        d[i] = beta[(n, i)];
    }
    Some(AffineFit { k, d, max_residual })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassMatch {
    /// Track indices (r, s).
    pub tracks: (usize, usize),
    /// Torque sign relating the pair: tau_s = sign * tau_r.
    pub sign: SignMatrix,
    /// (record index, q_r, q_s).
    pub pairs: Vec<(usize, Vec<f64>, Vec<f64>)>,
    pub fit: AffineFit,
}

/// Associates configurations across records by residual voting: for every pair of tracks the
/// affine fit over the shared records is computed, the worst record is trimmed while the fit
/// is poor, and the pairing is kept when the residual drops below `class_tol` with enough support.
pub fn match_correspondences(model: &ManipulatorModel, records: &[LevelSetRecord], cfg: &MatchConfig) -> Result<Vec<ClassMatch>> {
    if records.len() < 3 {
        return Err(Error::InsufficientData(format!("{} records, need at least 3", records.len())));
    }
    let n = model.n();
    let tracks = build_tracks(model, records, cfg.track_radius);
    let min_support = cfg.min_support.max(n + 2);
    let max_trim = records.len() / 4;
    let mut out = Vec::new();
    for (r, tr) in tracks.iter().enumerate() {
        for (s, ts) in tracks.iter().enumerate() {
            let mut idx: Vec<usize> = (0..records.len()).filter(|&j| tr.points[j].is_some() && ts.points[j].is_some()).collect();
            if idx.len() < min_support {
                continue;
            }
            let mut trimmed = 0;
            loop {
                let qr: Vec<Configuration> = idx.iter().map(|&j| tr.points[j].clone().unwrap()).collect();
                let qs: Vec<Configuration> = idx.iter().map(|&j| ts.points[j].clone().unwrap()).collect();
                let Some(fit) = fit_affine(&qr, &qs) else { break };
                if fit.max_residual < cfg.class_tol {
                    out.push(ClassMatch {
                        tracks: (r, s),
                        sign: sign_mul(&ts.sign, &tr.sign),
                        pairs: idx
                            .iter()
                            .zip(qr.iter().zip(&qs))
                            .map(|(&j, (a, b))| (j, a.as_slice().to_vec(), b.as_slice().to_vec()))
                            .collect(),
                        fit,
                    });
                    break;
                }
                if trimmed >= max_trim || idx.len() <= min_support {
                    break;
                }
                // drop the record with the largest residual and refit
                let worst = (0..idx.len())
                    .max_by(|&a, &b| {
                        residual_at(&fit, &qr[a], &qs[a]).total_cmp(&residual_at(&fit, &qr[b], &qs[b]))
                    })
                    .unwrap();
                idx.remove(worst);
                trimmed += 1;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("no track pair reached the support threshold".into()));
    }
    Ok(out)
}

fn residual_at(fit: &AffineFit, qr: &Configuration, qs: &Configuration) -> f64 {
    let n = qr.len();
    (0..n)
        .map(|i| {
            let p: f64 = fit.d[i] + (0..n).map(|j| fit.k[i * n + j] * qr[j]).sum::<f64>();
            (p - qs[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// `M q_r + N q_s = d` in the normalized form `N = I`, `M = -K`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymmetryRelation {
    pub m: Vec<f64>,
    pub n_mat: Vec<f64>,
    pub d: Vec<f64>,
    pub sign: SignMatrix,
    /// Largest residual over the supporting pairs (rad), after snapping when snapped.
    pub residual: f64,
    pub snapped: bool,
    /// Snapping was attempted and rejected; the relation is the free fit.
    pub snap_rejected: bool,
    pub support: usize,
    pub tracks: (usize, usize),
}

impl SymmetryRelation {
    pub fn k(&self) -> Vec<f64> {
        self.m.iter().map(|x| -x).collect()
    }

    pub fn as_map(&self) -> Option<AffineMap> {
        if !self.snapped {
            return None;
        }
        Some(AffineMap {
            k: self.k().iter().map(|x| x.round() as i64).collect(),
            d: self.d.clone(),
            sign: self.sign.clone(),
        })
    }
}

/// Final fit per class with the structural prior: snap, re-validate on the torus.
pub fn fit_relations(model: &ManipulatorModel, classes: &[ClassMatch], cfg: &MatchConfig) -> Vec<SymmetryRelation> {
    let n = model.n();
    classes
        .iter()
        .map(|c| {
            let free = &c.fit;
            let mut rel = SymmetryRelation {
                m: free.k.iter().map(|x| -x).collect(),
                n_mat: identity(n),
                d: free.d.clone(),
                sign: c.sign.clone(),
                residual: free.max_residual,
                snapped: false,
                snap_rejected: false,
                support: c.pairs.len(),
                tracks: c.tracks,
            };
            if cfg.snap {
                let k: Vec<i64> = free.k.iter().map(|x| x.round() as i64).collect();
                // offset from the snapped gains, averaged on the circle, then snapped to pi/2
                let d: Vec<f64> = (0..n)
                    .map(|i| {
                        let (mut sx, mut sy) = (0.0, 0.0);
                        for (_, qr, qs) in &c.pairs {
                            let v = qs[i] - (0..n).map(|j| k[i * n + j] as f64 * qr[j]).sum::<f64>();
                            sx += v.cos();
                            sy += v.sin();
                        }
                        let mean = sy.atan2(sx);
                        (mean / FRAC_PI_2).round() * FRAC_PI_2
                    })
                    .collect();
                let map = AffineMap { k: k.clone(), d: d.clone(), sign: c.sign.clone() };
                let res = c
                    .pairs
                    .iter()
                    .map(|(_, qr, qs)| {
                        let img = map.apply_raw(qr);
                        model.difference(img.as_slice(), qs).amax()
                    })
                    .fold(0.0, f64::max);
                if res <= cfg.snap_tol && map.invertible() {
                    rel.m = k.iter().map(|&x| -(x as f64)).collect();
                    rel.d = map.normalized(model).d;
                    rel.residual = res;
                    rel.snapped = true;
                } else {
                    rel.snap_rejected = true;
                    log::warn!("snap rejected for tracks {:?}: residual {res:.3e}", c.tracks);
                }
            }
            rel
        })
        .collect()
}

fn identity(n: usize) -> Vec<f64> {
    (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect()
}

// ---------------------------------------------------------------------------------------------
// group

/// `q -> K q + d` with torque sign `sign`; K integral.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AffineMap {
    pub k: Vec<i64>,
    pub d: Vec<f64>,
    pub sign: SignMatrix,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap { k: identity(n).iter().map(|&x| x as i64).collect(), d: vec![0.0; n], sign: vec![1; n] }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn apply_raw(&self, q: &[f64]) -> Configuration {
        let n = self.n();
        DVector::from_iterator(n, (0..n).map(|i| self.d[i] + (0..n).map(|j| self.k[i * n + j] as f64 * q[j]).sum::<f64>()))
    }

    /// Image of q wrapped into the model chart.
    pub fn apply(&self, model: &ManipulatorModel, q: &[f64]) -> Configuration {
        model.wrapped(&self.apply_raw(q))
    }

    /// `self o other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        let n = self.n();
        let mut k = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = (0..n).map(|l| self.k[i * n + l] * other.k[l * n + j]).sum();
            }
        }
        let d: Vec<f64> = (0..n).map(|i| self.d[i] + (0..n).map(|l| self.k[i * n + l] as f64 * other.d[l]).sum::<f64>()).collect();
        AffineMap { k, d, sign: sign_mul(&self.sign, &other.sign) }
    }

    pub fn invertible(&self) -> bool {
        let n = self.n();
        let m = DMatrix::from_fn(n, n, |i, j| self.k[i * n + j] as f64);
        m.determinant().abs() > 0.5
    }

    /// Offsets of full-turn joints reduced to `[-pi, pi)`.
    pub fn normalized(&self, model: &ManipulatorModel) -> AffineMap {
        let mut out = self.clone();
        for i in 0..self.n() {
            if model.continuous[i] {
                out.d[i] = crate::model::wrap_pi(out.d[i]);
                if (out.d[i] + std::f64::consts::PI).abs() < 1e-9 {
                    out.d[i] = std::f64::consts::PI;
                }
            }
        }
        out
    }

    pub fn same_as(&self, other: &AffineMap, model: &ManipulatorModel) -> bool {
        self.k == other.k
            && self.sign == other.sign
            && (0..self.n()).all(|i| {
                let diff = self.d[i] - other.d[i];
                if model.continuous[i] {
                    crate::model::wrap_pi(diff).abs() < 1e-6
                } else {
                    diff.abs() < 1e-6
                }
            })
    }
}

/// Closed set of primary symmetries (identity first).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Sps {
    pub elements: Vec<AffineMap>,
}

impl Sps {
    pub fn trivial(n: usize) -> Self {
        Sps { elements: vec![AffineMap::identity(n)] }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Closes the snapped relations under composition (finite groups need no explicit inverses),
/// failing past `cap` elements.
pub fn sps_closure(model: &ManipulatorModel, generators: &[AffineMap], cap: usize) -> Result<Sps> {
    let n = model.n();
    let mut elems: Vec<AffineMap> = vec![AffineMap::identity(n)];
    let push = |e: AffineMap, elems: &mut Vec<AffineMap>| -> Result<bool> {
        let e = e.normalized(model);
        if elems.iter().any(|x| x.same_as(&e, model)) {
            return Ok(false);
        }
        if elems.len() >= cap {
            return Err(Error::ClosureOverflow(cap));
        }
        elems.push(e);
        Ok(true)
    };
    for g in generators {
        push(g.clone(), &mut elems)?;
    }
    let mut frontier = 0;
    while frontier < elems.len() {
        let a = elems[frontier].clone();
        let gens = elems.clone();
        for b in gens {
            push(a.compose(&b), &mut elems)?;
            push(b.compose(&a), &mut elems)?;
        }
        frontier += 1;
    }
    Ok(Sps { elements: elems })
}

pub fn default_cap(n: usize) -> usize {
    1 << (n + 2)
}

/// Distinct snapped relations (as maps).
pub fn unique_maps(model: &ManipulatorModel, relations: &[SymmetryRelation]) -> Vec<AffineMap> {
    let mut out: Vec<AffineMap> = Vec::new();
    for r in relations {
        if let Some(m) = r.as_map() {
            let m = m.normalized(model);
            if !out.iter().any(|x| x.same_as(&m, model)) {
                out.push(m);
            }
        }
    }
    out
}

/// Largest `|G(g q) - sign G(q)|_inf` over `count` random configurations.
pub fn soundness(model: &ManipulatorModel, map: &AffineMap, count: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = model.n();
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let q: Vec<f64> = (0..n).map(|i| rng.gen_range(model.q_min[i]..=model.q_max[i])).collect();
        let img = map.apply(model, &q);
        let lhs = model.gravity_term(img.as_slice());
        let rhs = apply_sign(&map.sign, model.gravity_term(&q).as_slice());
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}

/// Groups the entries of a record into orbits of the SPS.
pub fn partition_record(model: &ManipulatorModel, sps: &Sps, rec: &LevelSetRecord, tol: f64) -> Vec<Vec<usize>> {
    let m = rec.entries.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for a in 0..m {
        for g in &sps.elements {
            let img = g.apply(model, &rec.entries[a].q);
            let s = sign_mul(&g.sign, &rec.entries[a].sign);
            for b in 0..m {
                if rec.entries[b].sign == s && model.distance(img.as_slice(), &rec.entries[b].q) < tol {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra] = rb;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..m {
        let r = find(&mut parent, a);
        groups.entry(r).or_default().push(a);
    }
    groups.into_values().collect()
}

/// Every symmetric image of `(q, tau)` inside the joint limits, original first.
pub fn expand_sample(model: &ManipulatorModel, sps: &Sps, q: &[f64], tau: &[f64]) -> Vec<(Configuration, TorqueVector)> {
    let mut out = Vec::with_capacity(sps.len());
    for g in &sps.elements {
        let img = g.apply(model, q);
        if model.within_limits(img.as_slice()) {
            out.push((img, apply_sign(&g.sign, tau)));
        } else {
            log::trace!("symmetric image outside limits dropped");
        }
    }
    out
}

// ---------------------------------------------------------------------------------------------
// BCTS

/// Fundamental domain of the SPS action: q belongs when it is the selected image of its orbit.
/// Selection prefers images inside the joint limits, then (optionally) statically stable images,
/// which are the only ones settling can rest at, then the one closest to the anchor (torus
/// distance), ties broken lexicographically.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Bcts {
    pub anchor: Vec<f64>,
    pub stable_first: bool,
    pub sps: Sps,
}

pub fn construct_bcts(model: &ManipulatorModel, sps: &Sps, anchor: Option<&[f64]>, stable_first: bool) -> Result<Bcts> {
    let anchor = anchor.map(|a| a.to_vec()).unwrap_or_else(|| model.home_configuration.clone());
    if anchor.len() != model.n() {
        return Err(Error::InvalidConfig("BCTS anchor has the wrong dimension".into()));
    }
    for g in sps.elements.iter().skip(1) {
        let img = g.apply(model, &anchor);
        if model.distance(img.as_slice(), &anchor) < 1e-6 {
            return Err(Error::InvalidConfig("BCTS anchor is fixed by a symmetry; pick a generic anchor".into()));
        }
    }
    Ok(Bcts { anchor, stable_first, sps: sps.clone() })
}

impl Bcts {
    /// Index of the SPS element whose image of q is the representative, and that image.
    pub fn representative(&self, model: &ManipulatorModel, q: &[f64]) -> (usize, Configuration) {
        let mut best: Option<(usize, Configuration, (u8, f64))> = None;
        for (i, g) in self.sps.elements.iter().enumerate() {
            let img = g.apply(model, q);
            let outside = !model.within_limits(img.as_slice());
            let unstable = self.stable_first && !model.is_stable_equilibrium(img.as_slice());
            let key = ((outside as u8) * 2 + unstable as u8, model.distance(img.as_slice(), &self.anchor));
            let better = match &best {
                None => true,
                Some((_, b, bk)) => {
                    key.0 < bk.0
                        || (key.0 == bk.0
                            && (key.1 < bk.1 - 1e-12 || ((key.1 - bk.1).abs() <= 1e-12 && lex_less(img.as_slice(), b.as_slice()))))
                }
            };
            if better {
                best = Some((i, img, key));
            }
        }
        let (i, img, _) = best.expect("SPS holds the identity");
        (i, img)
    }

    pub fn contains(&self, model: &ManipulatorModel, q: &[f64]) -> bool {
        let q = model.wrapped(&DVector::from_column_slice(q));
        let (_, rep) = self.representative(model, q.as_slice());
        model.distance(rep.as_slice(), q.as_slice()) < 1e-9
    }

    /// Number of orbit images of q inside the domain (1 for every generic q).
    pub fn orbit_hits(&self, model: &ManipulatorModel, q: &[f64]) -> usize {
        let mut imgs: Vec<Configuration> = Vec::new();
        for g in &self.sps.elements {
            let img = g.apply(model, q);
            if !imgs.iter().any(|x| model.distance(x.as_slice(), img.as_slice()) < 1e-9) {
                imgs.push(img);
            }
        }
        imgs.iter().filter(|x| self.contains(model, x.as_slice())).count()
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SymmetryArtifact {
    pub version: u32,
    pub relations: Vec<SymmetryRelation>,
    pub sps: Sps,
    pub bcts: Option<Bcts>,
}

pub const SYMMETRY_VERSION: u32 = 1;

/// Full pipeline over a set of records.
pub fn discover_sps(model: &ManipulatorModel, records: &[LevelSetRecord], cfg: &MatchConfig) -> Result<(Vec<SymmetryRelation>, Sps)> {
    let classes = match_correspondences(model, records, cfg)?;
    let relations = fit_relations(model, &classes, cfg);
    let maps = unique_maps(model, &relations);
    let sps = sps_closure(model, &maps, default_cap(model.n()))?;
    Ok((relations, sps))
}

/// Fraction of uniform random configurations inside the BCTS.
pub fn bcts_fraction(model: &ManipulatorModel, bcts: &Bcts, count: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, stream::LATTICE);
    let n = model.n();
    let inside = (0..count)
        .filter(|_| {
            let q: Vec<f64> = (0..n).map(|i| rng.gen_range(model.q_min[i]..model.q_max[i])).collect();
            bcts.contains(model, &q)
        })
        .count();
    inside as f64 / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_profile_without_intermediates() {
        let p = generate_torque_profile(&[0.4, -0.2], 4, &[1, 1], &[1, 1], &[]);
        for s in &p.samples {
            assert!((s[0] - 0.4).abs() < 1e-15 && (s[1] + 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn profile_endpoints_and_slopes() {
        let inter = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![-1.0, 0.5])];
        let p = generate_torque_profile(&[0.4, -0.2], 20, &[-1, 1], &[1, -1], &inter);
        assert_eq!(p.samples[0].as_slice(), &[-0.4, -0.2]);
        assert_eq!(p.samples[19].as_slice(), &[0.4, 0.2]);
        let xs = [0.0, 19.0 / 3.0, 38.0 / 3.0, 19.0];
        let ys = [-0.4, 1.0, -1.0, 0.4];
        let s = ClampedSpline::new(&xs, &ys);
        assert!(s.derivative(0.0).abs() < 1e-12);
        assert!(s.derivative(19.0).abs() < 1e-12);
        for (x, y) in xs.iter().zip(ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
        // discrete end slope is second order in the sample step
        let last = p.samples[19][0] - p.samples[18][0];
        assert!(last.abs() < 0.2);
    }

    #[test]
    fn sign_variants_enumerate() {
        let v = sign_variants(3);
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], vec![1, 1, 1]);
        let mut sorted = v.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
    }

    #[test]
    fn lattice_shape() {
        let t = target_lattice(&[1.0, 2.0], &[0.1, 0.2], &[4, 3]);
        assert_eq!(t.len(), 12);
        assert!((t[0][0] - 0.85).abs() < 1e-12 && (t[0][1] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn affine_fit_exact() {
        let qr: Vec<Configuration> = (0..6).map(|i| DVector::from_vec(vec![0.1 * i as f64, (i as f64).sin()])).collect();
        let qs: Vec<Configuration> = qr.iter().map(|q| DVector::from_vec(vec![-q[0] + 1.0, 2.0 * q[0] + q[1]])).collect();
        let f = fit_affine(&qr, &qs).unwrap();
        assert!(f.max_residual < 1e-12);
        assert!((f.k[0] + 1.0).abs() < 1e-9 && (f.k[2] - 2.0).abs() < 1e-9 && (f.d[0] - 1.0).abs() < 1e-9);
    }
}
