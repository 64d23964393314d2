//! Set of static torques: sampled estimate, alpha-complex boundary, membership and projection.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ManipulatorModel, TorqueVector};

pub const SST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Nearest boundary vertex.
    #[default]
    Vertex,
    /// Nearest point on a frontier facet.
    Facet,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SstEstimate {
    pub version: u32,
    pub dim: usize,
    pub torque_samples: Vec<Vec<f64>>,
    /// Sample indices, ascending.
    pub boundary_vertices: Vec<usize>,
    /// Frontier (d-1)-faces as sample indices.
    pub boundary_facets: Vec<Vec<usize>>,
    /// Kept d-simplices of the alpha complex.
    pub simplices: Vec<Vec<usize>>,
    /// Circumradius threshold (N m); unbounded (convex hull) is stored as null.
    #[serde(with = "unbounded")]
    pub alpha: f64,
    #[serde(default)]
    pub projection: Projection,
    #[serde(skip)]
    index: Option<Index>,
}

/// Alpha threshold for `estimate_boundary`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha {
    /// Multiple of the median nearest-neighbour distance.
    MedianNn(f64),
    /// Multiple of the smallest threshold at which every sample lies in a kept simplex.
    Cover(f64),
    Fixed(f64),
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::Cover(1.5)
    }
}

#[derive(Clone, Debug)]
pub struct Boundary {
    pub vertices: Vec<usize>,
    pub facets: Vec<Vec<usize>>,
    pub simplices: Vec<Vec<usize>>,
    pub alpha: f64,
}

/// Configuration-space exploration: stratified grid plus uniform draws, mapped through G.
pub fn explore_sst(model: &ManipulatorModel, n_samples: usize, seed: u64) -> Result<SstEstimate> {
    explore_sst_with(model, n_samples, seed, Alpha::default())
}

pub fn explore_sst_with(model: &ManipulatorModel, n_samples: usize, seed: u64, alpha: Alpha) -> Result<SstEstimate> {
    let n = model.n();
    if n_samples < n + 2 {
        return Err(Error::InvalidConfig(format!("need at least {} samples", n + 2)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_axis = ((n_samples / 2) as f64).powf(1.0 / n as f64).floor().max(1.0) as usize;
    let grid_count = per_axis.pow(n as u32);
    let mut qs: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    for idx in 0..grid_count {
        let mut rem = idx;
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let k = rem % per_axis;
                rem /= per_axis;
                // grid includes the limit faces, whose images bound the SST of a limited arm
                let u = if per_axis == 1 { 0.5 } else { k as f64 / (per_axis - 1) as f64 };
                model.q_min[i] + u * (model.q_max[i] - model.q_min[i])
            })
            .collect();
        qs.push(q);
    }
    // box corners and edges carry the extreme torques for limited joints
    for c in 0..(1usize << n) {
        let q: Vec<f64> = (0..n).map(|i| if c >> i & 1 == 1 { model.q_max[i] } else { model.q_min[i] }).collect();
        qs.push(q);
    }
    while qs.len() < n_samples {
        let q: Vec<f64> = (0..n).map(|i| rng.gen_range(model.q_min[i]..=model.q_max[i])).collect();
        qs.push(q);
    }
    qs.truncate(n_samples.max(grid_count));
    let taus: Vec<Vec<f64>> = qs.iter().map(|q| model.gravity_term(q).as_slice().to_vec()).collect();
    SstEstimate::build(taus, alpha)
}

impl SstEstimate {
    pub fn build(samples: Vec<Vec<f64>>, alpha: Alpha) -> Result<Self> {
        let samples = dedup(samples);
        let dim = samples.first().map(|s| s.len()).ok_or(Error::DegenerateInput)?;
        let b = estimate_boundary(&samples, alpha)?;
        let mut s = SstEstimate {
            version: SST_VERSION,
            dim,
            torque_samples: samples,
            boundary_vertices: b.vertices,
            boundary_facets: b.facets,
            simplices: b.simplices,
            alpha: b.alpha,
            projection: Projection::Vertex,
            index: None,
        };
        s.rebuild_index();
        Ok(s)
    }

    /// Adds observed static torques and rebuilds with the current alpha.
    pub fn ingest(&mut self, extra: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut all = std::mem::take(&mut self.torque_samples);
        all.extend(extra);
        let projection = self.projection;
        *self = SstEstimate::build(all, Alpha::Fixed(self.alpha))?;
        self.projection = projection;
        Ok(())
    }

    pub fn rebuild_index(&mut self) {
        self.index = Some(Index::new(&self.torque_samples, &self.simplices, self.dim));
    }

    fn index(&self) -> &Index {
        self.index.as_ref().expect("index built on construction and load")
    }

    pub fn contains(&self, tau: &[f64]) -> bool {
        let idx = self.index();
        if idx.locate(tau, &self.torque_samples).is_some() {
            return true;
        }
        // isolated vertices of the alpha complex
        idx.isolated.iter().any(|&i| dist2(&self.torque_samples[i], tau) <= idx.tol * idx.tol)
    }

    /// Nearest boundary vertex (ties to the lowest index), or nearest facet point when configured.
    pub fn project_to_boundary(&self, tau: &[f64]) -> Result<TorqueVector> {
        if self.boundary_vertices.is_empty() {
            return Err(Error::EmptyBoundary);
        }
        if self.projection == Projection::Facet && !self.boundary_facets.is_empty() {
            return Ok(DVector::from_vec(self.nearest_facet_point(tau)));
        }
        let i = self.nearest_boundary_vertex(tau);
        Ok(DVector::from_column_slice(&self.torque_samples[i]))
    }

    /// Sample index of the nearest boundary vertex.
    pub fn nearest_boundary_vertex(&self, tau: &[f64]) -> usize {
        let mut best = (f64::INFINITY, usize::MAX);
        for &v in &self.boundary_vertices {
            let d = dist2(&self.torque_samples[v], tau);
            if d < best.0 {
                best = (d, v);
            }
        }
        best.1
    }

    fn nearest_facet_point(&self, tau: &[f64]) -> Vec<f64> {
        let mut best = (f64::INFINITY, Vec::new());
        for f in &self.boundary_facets {
            let pts: Vec<&[f64]> = f.iter().map(|&i| self.torque_samples[i].as_slice()).collect();
            let p = closest_point_on_simplex(&pts, tau);
            let d = dist2(&p, tau);
            if d < best.0 {
                best = (d, p);
            }
        }
        best.1
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for s in &self.torque_samples {
            for i in 0..self.dim {
                lo[i] = lo[i].min(s[i]);
                hi[i] = hi[i].max(s[i]);
            }
        }
        (lo, hi)
    }

    /// Lebesgue measure of the alpha complex.
    pub fn volume(&self) -> f64 {
        self.simplices.iter().map(|s| simplex_volume(&self.torque_samples, s)).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut e: SstEstimate = serde_json::from_str(s)?;
        if e.version != SST_VERSION {
            return Err(Error::Version(e.version));
        }
        e.rebuild_index();
        Ok(e)
    }
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_some(x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dedup(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut seen = std::collections::HashSet::new();
    v.retain(|s| seen.insert(s.iter().map(|x| x.to_bits()).collect::<Vec<_>>()));
    v
}

fn simplex_volume(pts: &[Vec<f64>], s: &[usize]) -> f64 {
    let d = s.len() - 1;
    let m = DMatrix::from_fn(d, d, |r, c| pts[s[c + 1]][r] - pts[s[0]][r]);
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    m.determinant().abs() / fact
}

/// Delaunay triangulation filtered by circumradius; frontier facets are the
/// (d-1)-faces owned by exactly one kept simplex. `Alpha::Fixed(f64::INFINITY)` gives the convex hull.
pub fn estimate_boundary(samples: &[Vec<f64>], alpha: Alpha) -> Result<Boundary> {
    let d = samples.first().map(|s| s.len()).ok_or(Error::DegenerateInput)?;
    if samples.len() < d + 1 || affine_rank(samples) < d {
        return Err(Error::DegenerateInput);
    }
    let all = if d == 1 { delaunay_1d(samples) } else { delaunay(samples)? };
    let alpha = match alpha {
        Alpha::Fixed(a) => a,
        Alpha::MedianNn(k) => k * median_nn(samples, &all),
        Alpha::Cover(k) => k * cover_threshold(samples, &all),
    };
    let simplices: Vec<Vec<usize>> = all
        .into_iter()
        .filter(|s| circumradius(samples, s) <= alpha)
        .collect();
    let mut faces: HashMap<Vec<usize>, usize> = HashMap::new();
    for s in &simplices {
        for skip in 0..s.len() {
            let mut f: Vec<usize> = s.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect();
            f.sort_unstable();
            *faces.entry(f).or_default() += 1;
        }
    }
    let mut facets: Vec<Vec<usize>> = faces.into_iter().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect();
    facets.sort();
    let mut in_simplex = vec![false; samples.len()];
    for s in &simplices {
        for &v in s {
            in_simplex[v] = true;
        }
    }
    let mut vertices: Vec<usize> = facets.iter().flatten().copied().collect();
    vertices.extend((0..samples.len()).filter(|&i| !in_simplex[i]));
    vertices.sort_unstable();
    vertices.dedup();
    Ok(Boundary { vertices, facets, simplices, alpha })
}

fn affine_rank(samples: &[Vec<f64>]) -> usize {
    let d = samples[0].len();
    let n = samples.len();
    let mean: Vec<f64> = (0..d).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let v = DVector::from_iterator(d, (0..d).map(|i| s[i] - mean[i]));
        cov += &v * v.transpose();
    }
    let eig = cov.symmetric_eigen().eigenvalues;
    let top = eig.amax();
    if top <= 0.0 {
        return 0;
    }
    eig.iter().filter(|&&e| e > 1e-20 * top).count()
}

fn circumradius(pts: &[Vec<f64>], s: &[usize]) -> f64 {
    let d = s.len() - 1;
    let v0 = &pts[s[0]];
    // 2 (v_i - v_0) . x = |v_i - v_0|^2 with x = centre - v_0
    let a = DMatrix::from_fn(d, d, |r, c| 2.0 * (pts[s[r + 1]][c] - v0[c]));
    let b = DVector::from_fn(d, |r, _| dist2(&pts[s[r + 1]], v0));
    match a.lu().solve(&b) {
        Some(x) => x.norm(),
        None => f64::INFINITY,
    }
}

/// max over samples of the smallest circumradius among the simplices using it.
fn cover_threshold(pts: &[Vec<f64>], simplices: &[Vec<usize>]) -> f64 {
    let mut best = vec![f64::INFINITY; pts.len()];
    for s in simplices {
        let e = circumradius(pts, s);
        for &v in s {
            best[v] = best[v].min(e);
        }
    }
    best.into_iter().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

/// Nearest neighbours are always joined by a Delaunay edge.
fn median_nn(pts: &[Vec<f64>], simplices: &[Vec<usize>]) -> f64 {
    let mut nn = vec![f64::INFINITY; pts.len()];
    for s in simplices {
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                let d = dist2(&pts[s[a]], &pts[s[b]]);
                nn[s[a]] = nn[s[a]].min(d);
                nn[s[b]] = nn[s[b]].min(d);
            }
        }
    }
    let mut v: Vec<f64> = nn.into_iter().filter(|x| x.is_finite()).map(f64::sqrt).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn delaunay_1d(samples: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a][0].partial_cmp(&samples[b][0]).unwrap().then(a.cmp(&b)));
    idx.windows(2).map(|w| vec![w[0], w[1]]).collect()
}

fn delaunay(samples: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let d = samples[0].len();
    let n = samples.len();
    // center and scale so the paraboloid lift is well conditioned
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for s in samples {
        for i in 0..d {
            lo[i] = lo[i].min(s[i]);
            hi[i] = hi[i].max(s[i]);
        }
    }
    let mut lifted = Vec::with_capacity(n * (d + 1));
    for s in samples {
        let mut r2 = 0.0;
        for i in 0..d {
            let x = (s[i] - 0.5 * (lo[i] + hi[i])) / (hi[i] - lo[i]).max(1e-300);
            lifted.push(x);
            r2 += x * x;
        }
        lifted.push(r2);
    }
    let qh = qhull::QhBuilder::default()
        .qhull_args(["QJ", "Pp"])
        .map_err(|e| Error::Triangulation(format!("{e:?}")))?
        .build(d + 1, &mut lifted)
        .map_err(|e| Error::Triangulation(format!("{e:?}")))?;
    let mut out = Vec::new();
    for f in qh.facets() {
        let Some(normal) = f.normal() else { continue };
        // lower hull of the lift = Delaunay simplices
        if normal[d] >= 0.0 {
            continue;
        }
        let Some(vs) = f.vertices() else { continue };
        let mut s: Vec<usize> = vs.iter().filter_map(|v| v.index(&qh)).collect();
        if s.len() != d + 1 {
            continue;
        }
        s.sort_unstable();
        // joggling can leave flat slivers on the hull; they carry no volume
        if simplex_volume(samples, &s) <= 1e-14 * volume_scale(&lo, &hi) {
            continue;
        }
        out.push(s);
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::DegenerateInput);
    }
    Ok(out)
}

fn volume_scale(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| (b - a).max(1e-300)).product()
}

/// Uniform-grid bucket index over simplex bounding boxes with precomputed barycentric maps.
#[derive(Clone, Debug)]
struct Index {
    dim: usize,
    lo: Vec<f64>,
    cell: Vec<f64>,
    cells: Vec<usize>,
    buckets: HashMap<usize, Vec<u32>>,
    /// Per simplex: base vertex then the row-major inverse edge matrix.
    maps: Vec<(usize, Vec<f64>)>,
    isolated: Vec<usize>,
    tol: f64,
}

impl Index {
    fn new(pts: &[Vec<f64>], simplices: &[Vec<usize>], dim: usize) -> Self {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in pts {
            for i in 0..dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let scale = (0..dim).map(|i| hi[i] - lo[i]).fold(0.0, f64::max).max(1e-12);
        let tol = 1e-9 * scale;
        let per = ((simplices.len().max(1) as f64).powf(1.0 / dim as f64).ceil() as usize).clamp(1, 256);
        let cells = vec![per; dim];
        let cell: Vec<f64> = (0..dim).map(|i| ((hi[i] - lo[i]) / per as f64).max(1e-12)).collect();
        let mut idx = Index { dim, lo, cell, cells, buckets: HashMap::new(), maps: Vec::new(), isolated: Vec::new(), tol };
        let mut used = vec![false; pts.len()];
        for (k, s) in simplices.iter().enumerate() {
            for &v in s {
                used[v] = true;
            }
            let base = s[0];
            let m = DMatrix::from_fn(dim, dim, |r, c| pts[s[c + 1]][r] - pts[base][r]);
            let inv = m.try_inverse().unwrap_or_else(|| DMatrix::zeros(dim, dim));
            idx.maps.push((base, inv.transpose().as_slice().to_vec()));
            let mut smin = vec![f64::INFINITY; dim];
            let mut smax = vec![f64::NEG_INFINITY; dim];
            for &v in s {
                for i in 0..dim {
                    smin[i] = smin[i].min(pts[v][i] - tol);
                    smax[i] = smax[i].max(pts[v][i] + tol);
                }
            }
            let a = idx.cell_coords(&smin);
            let b = idx.cell_coords(&smax);
            idx.for_each_cell(&a, &b, |key, buckets| buckets.entry(key).or_default().push(k as u32));
        }
        idx.isolated = (0..pts.len()).filter(|&i| !used[i]).collect();
        idx
    }

    fn cell_coords(&self, x: &[f64]) -> Vec<usize> {
        (0..self.dim)
            .map(|i| (((x[i] - self.lo[i]) / self.cell[i]).floor().max(0.0) as usize).min(self.cells[i] - 1))
            .collect()
    }

    fn key(&self, c: &[usize]) -> usize {
        c.iter().zip(&self.cells).rev().fold(0, |acc, (&ci, &n)| acc * n + ci)
    }

    fn for_each_cell(&mut self, a: &[usize], b: &[usize], mut f: impl FnMut(usize, &mut HashMap<usize, Vec<u32>>)) {
        let mut cur = a.to_vec();
        loop {
            let key = self.key(&cur);
            f(key, &mut self.buckets);
            let mut i = 0;
            loop {
                if i == self.dim {
                    return;
                }
                if cur[i] < b[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = a[i];
                i += 1;
            }
        }
    }

    fn locate(&self, x: &[f64], pts: &[Vec<f64>]) -> Option<usize> {
        for i in 0..self.dim {
            let span = self.cell[i] * self.cells[i] as f64;
            if x[i] < self.lo[i] - self.tol || x[i] > self.lo[i] + span + self.tol {
                return None;
            }
        }
        let key = self.key(&self.cell_coords(x));
        let bucket = self.buckets.get(&key)?;
        let d = self.dim;
        let mut rel = vec![0.0; d];
        for &k in bucket {
            let (base, inv) = &self.maps[k as usize];
            for i in 0..d {
                rel[i] = x[i] - pts[*base][i];
            }
            let mut sum = 0.0;
            let mut inside = true;
            for r in 0..d {
                let lam: f64 = (0..d).map(|c| inv[r * d + c] * rel[c]).sum();
                if lam < -1e-9 {
                    inside = false;
                    break;
                }
                sum += lam;
            }
            if inside && sum <= 1.0 + 1e-9 {
                return Some(k as usize);
            }
        }
        None
    }
}

/// Closest point of the simplex spanned by `pts` to `x`, by enumerating faces.
pub fn closest_point_on_simplex(pts: &[&[f64]], x: &[f64]) -> Vec<f64> {
    let k = pts.len();
    let d = x.len();
    let mut best = (f64::INFINITY, pts[0].to_vec());
    for mask in 1usize..(1 << k) {
        let face: Vec<&[f64]> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| pts[i]).collect();
        let m = face.len() - 1;
        let cand = if m == 0 {
            face[0].to_vec()
        } else {
            let e = DMatrix::from_fn(d, m, |r, c| face[c + 1][r] - face[0][r]);
            let rhs = DVector::from_iterator(d, (0..d).map(|r| x[r] - face[0][r]));
            let gram = e.transpose() * &e;
            let Some(lam) = gram.lu().solve(&(e.transpose() * rhs)) else { continue };
            if lam.iter().any(|&l| l < 0.0) || lam.sum() > 1.0 {
                continue;
            }
            let p = e * lam;
            (0..d).map(|r| face[0][r] + p[r]).collect()
        };
        let dd = dist2(&cand, x);
        if dd < best.0 {
            best = (dd, cand);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn components(facets: &[Vec<usize>]) -> usize {
        let mut parent: HashMap<usize, usize> = HashMap::new();
        fn find(p: &mut HashMap<usize, usize>, x: usize) -> usize {
            let px = *p.entry(x).or_insert(x);
            if px == x {
                x
            } else {
                let r = find(p, px);
                p.insert(x, r);
                r
            }
        }
        for f in facets {
            let a = find(&mut parent, f[0]);
            let b = find(&mut parent, f[1]);
            parent.insert(a, b);
        }
        let keys: Vec<usize> = parent.keys().copied().collect();
        let mut roots: Vec<usize> = keys.into_iter().map(|k| find(&mut parent, k)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    fn square() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]
    }

    #[test]
    fn square_hull() {
        let b = estimate_boundary(&square(), Alpha::Fixed(f64::INFINITY)).unwrap();
        assert_eq!(b.vertices.len(), 4);
        assert_eq!(b.facets.len(), 4);
        assert_eq!(b.simplices.len(), 2);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(estimate_boundary(&pts, Alpha::default()), Err(Error::DegenerateInput)));
    }

    #[test]
    fn annulus_has_two_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..120 {
                let r = 1.0 + (i as f64 + rng.gen_range(0.3..0.7)) / 12.0;
                let t = (j as f64 + rng.gen_range(0.3..0.7)) / 120.0 * std::f64::consts::TAU;
                pts.push(vec![r * t.cos(), r * t.sin()]);
            }
        }
        let b = estimate_boundary(&pts, Alpha::default()).unwrap();
        assert_eq!(components(&b.facets), 2);
        let hull = estimate_boundary(&pts, Alpha::Fixed(f64::INFINITY)).unwrap();
        assert_eq!(components(&hull.facets), 1);
    }

    #[test]
    fn square_far_point_projects_to_corner() {
        let s = SstEstimate::build(square(), Alpha::Fixed(f64::INFINITY)).unwrap();
        assert!(!s.contains(&[10.0, 10.0]));
        assert!(s.contains(&[0.5, 0.5]));
        assert!(s.contains(&[1.0, 1.0]));
        let p = s.project_to_boundary(&[10.0, 10.0]).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 1.0]);
        let p = s.project_to_boundary(&[1.2, 0.4]).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = SstEstimate::build(square(), Alpha::Fixed(f64::INFINITY)).unwrap();
        // equidistant from (1,0) and (1,1)
        assert_eq!(s.nearest_boundary_vertex(&[3.0, 0.5]), 1);
    }

    #[test]
    fn facet_projection_lands_on_boundary() {
        let mut s = SstEstimate::build(square(), Alpha::Fixed(f64::INFINITY)).unwrap();
        s.projection = Projection::Facet;
        let p = s.project_to_boundary(&[1.2, 0.4]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12);
        assert!(s.contains(p.as_slice()));
    }

    #[test]
    fn one_dimensional_interval() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let s = SstEstimate::build(pts, Alpha::Fixed(f64::INFINITY)).unwrap();
        assert_eq!(s.boundary_vertices.len(), 2);
        assert!(s.contains(&[0.0]));
        assert!(!s.contains(&[1.5]));
    }

    #[test]
    fn json_roundtrip() {
        let s = SstEstimate::build(square(), Alpha::Fixed(f64::INFINITY)).unwrap();
        let back = SstEstimate::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.boundary_facets, s.boundary_facets);
        assert!(back.contains(&[0.25, 0.75]));
    }

    #[test]
    fn unit_cube_volume_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts: Vec<Vec<f64>> = (0..8).map(|c| (0..3).map(|k| (c >> k & 1) as f64).collect()).collect();
        for _ in 0..500 {
            pts.push((0..3).map(|_| rng.gen::<f64>()).collect());
        }
        let s = SstEstimate::build(pts, Alpha::Fixed(f64::INFINITY)).unwrap();
        assert!((s.volume() - 1.0).abs() < 1e-9);
        assert!(s.contains(&[0.3, 0.9, 0.01]));
        assert!(!s.contains(&[0.3, 1.01, 0.5]));
    }
}
