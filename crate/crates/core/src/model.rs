//! Serial revolute arm used as the ground-truth plant.
//!
//! Link `i` starts at joint `i`. Its frame is `R_i = R_{i-1} * Rot(axis_i, q_i)`, the link
//! extends `l_i` along its local x axis and carries a point mass at `c_i` along that axis.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Configuration = DVector<f64>;
pub type TorqueVector = DVector<f64>;

fn default_gravity() -> [f64; 3] {
    [0.0, -9.81, 0.0]
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManipulatorModel {
    #[serde(default)]
    pub name: String,
    pub link_lengths: Vec<f64>,
    pub link_masses: Vec<f64>,
    pub link_coms: Vec<f64>,
    pub joint_axes: Vec<[f64; 3]>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    /// Full-turn joints. Their limits must span exactly 2pi and only act as the chart.
    #[serde(default)]
    pub continuous: Vec<bool>,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    pub viscous_damping: Vec<f64>,
    /// Rotor inertia per joint (kg m^2); keeps the mass matrix regular for point-mass links.
    #[serde(default)]
    pub armature: Vec<f64>,
    pub home_configuration: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Frames {
    /// Joint origins `o_0..o_{n-1}` followed by the tip.
    pub origins: Vec<Vector3<f64>>,
    /// World-frame joint axes.
    pub axes: Vec<Vector3<f64>>,
    pub coms: Vec<Vector3<f64>>,
    pub rotations: Vec<Matrix3<f64>>,
}

impl ManipulatorModel {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut m: ManipulatorModel = toml::from_str(s)?;
        m.fill_defaults();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    fn fill_defaults(&mut self) {
        let n = self.link_lengths.len();
        if self.continuous.is_empty() {
            self.continuous = vec![false; n];
        }
        if self.armature.is_empty() {
            self.armature = vec![0.01; n];
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.link_lengths.len();
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if n == 0 {
            return bad("at least one joint required".into());
        }
        let lens = [
            ("link_masses", self.link_masses.len()),
            ("link_coms", self.link_coms.len()),
            ("joint_axes", self.joint_axes.len()),
            ("q_min", self.q_min.len()),
            ("q_max", self.q_max.len()),
            ("continuous", self.continuous.len()),
            ("viscous_damping", self.viscous_damping.len()),
            ("armature", self.armature.len()),
            ("home_configuration", self.home_configuration.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return bad(format!("{name} has {len} entries, expected {n}"));
            }
        }
        for i in 0..n {
            let (l, m, c) = (self.link_lengths[i], self.link_masses[i], self.link_coms[i]);
            // zero-length links are allowed so that multi-axis joints (shoulders) can be chained
            if !(l >= 0.0) || !(m > 0.0) || !(c >= 0.0 && c <= l) {
                return bad(format!("link {i}: need length >= 0, mass > 0, 0 <= com <= length"));
            }
            if !(self.viscous_damping[i] > 0.0) || !(self.armature[i] >= 0.0) {
                return bad(format!("joint {i}: damping must be > 0, armature >= 0"));
            }
            let a = Vector3::from(self.joint_axes[i]);
            if (a.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("joint {i}: axis must be a unit vector"));
            }
            if !(self.q_min[i] < self.q_max[i]) {
                return bad(format!("joint {i}: q_min must be < q_max"));
            }
            if self.continuous[i] && (self.q_max[i] - self.q_min[i] - TAU).abs() > 1e-9 {
                return bad(format!("joint {i}: continuous joint limits must span 2pi"));
            }
            let h = self.home_configuration[i];
            if !(h >= self.q_min[i] && h <= self.q_max[i]) {
                return bad(format!("joint {i}: home outside limits"));
            }
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return bad("gravity must be finite".into());
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn home(&self) -> Configuration {
        DVector::from_column_slice(&self.home_configuration)
    }

    pub fn q_min_vec(&self) -> Configuration {
        DVector::from_column_slice(&self.q_min)
    }

    pub fn q_max_vec(&self) -> Configuration {
        DVector::from_column_slice(&self.q_max)
    }

    pub fn gravity_vec(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn frames(&self, q: &[f64]) -> Frames {
        let n = self.n();
        let mut origins = Vec::with_capacity(n + 1);
        let mut axes = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);
        let mut rotations = Vec::with_capacity(n);
        let mut r = Matrix3::identity();
        let mut o = Vector3::zeros();
        for i in 0..n {
            let a = Vector3::from(self.joint_axes[i]);
            axes.push(r * a);
            origins.push(o);
            r *= Rotation3::from_axis_angle(&Unit::new_unchecked(a), q[i]).into_inner();
            let ex = r.column(0).into_owned();
            coms.push(o + ex * self.link_coms[i]);
            o += ex * self.link_lengths[i];
            rotations.push(r);
        }
        origins.push(o);
        Frames { origins, axes, coms, rotations }
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Vector3<f64> {
        self.frames(q).origins[self.n()]
    }

    /// Tip position Jacobian (3 x n).
    pub fn tip_jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let f = self.frames(q);
        let n = self.n();
        let tip = f.origins[n];
        let mut j = DMatrix::zeros(3, n);
        for k in 0..n {
            let c = f.axes[k].cross(&(tip - f.origins[k]));
            j.fixed_view_mut::<3, 1>(0, k).copy_from(&c);
        }
        j
    }

    pub fn potential_energy(&self, q: &[f64]) -> f64 {
        let g = self.gravity_vec();
        let f = self.frames(q);
        let f0 = self.frames(&vec![0.0; self.n()]);
        (0..self.n())
            .map(|i| -self.link_masses[i] * g.dot(&(f.coms[i] - f0.coms[i])))
            .sum()
    }

    pub fn gravity_term(&self, q: &[f64]) -> TorqueVector {
        let f = self.frames(q);
        self.gravity_from_frames(&f)
    }

    fn gravity_from_frames(&self, f: &Frames) -> TorqueVector {
        let n = self.n();
        let g = self.gravity_vec();
        // accumulate first moments of distal mass so each joint is O(1)
        let mut out = DVector::zeros(n);
        let mut mass = 0.0;
        let mut moment = Vector3::zeros();
        for j in (0..n).rev() {
            mass += self.link_masses[j];
            moment += f.coms[j] * self.link_masses[j];
            let arm = moment - f.origins[j] * mass;
            out[j] = -g.dot(&f.axes[j].cross(&arm));
        }
        out
    }

    /// Hessian of the potential energy, i.e. dG/dq. Symmetric.
    pub fn gravity_jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let f = self.frames(q);
        let g = self.gravity_vec();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                // links distal to the later joint move under both
                let mut mass = 0.0;
                let mut moment = Vector3::zeros();
                for i in k..n {
                    mass += self.link_masses[i];
                    moment += f.coms[i] * self.link_masses[i];
                }
                let arm = moment - f.origins[k] * mass;
                let v = -g.dot(&f.axes[j].cross(&f.axes[k].cross(&arm)));
                h[(j, k)] = v;
                h[(k, j)] = v;
            }
        }
        h
    }

    /// True when q is a strict local minimum of U(q) - tau^T q, the only equilibria a damped
    /// plant under constant torque can rest at.
    pub fn is_stable_equilibrium(&self, q: &[f64]) -> bool {
        let h = self.gravity_jacobian(q);
        let scale = h.amax().max(1e-12);
        let shifted = h - DMatrix::identity(self.n(), self.n()) * (1e-9 * scale);
        shifted.cholesky().is_some()
    }

    /// Joint-limit check. Closed bounds; full-turn joints never violate.
    pub fn within_limits(&self, q: &[f64]) -> bool {
        (0..self.n()).all(|i| self.continuous[i] || (q[i] >= self.q_min[i] && q[i] <= self.q_max[i]))
    }

    pub fn any_continuous(&self) -> bool {
        self.continuous.iter().any(|&c| c)
    }

    /// Maps full-turn joints into their chart `[q_min, q_min + 2pi)`.
    pub fn wrap(&self, q: &mut [f64]) {
        for i in 0..self.n() {
            if self.continuous[i] {
                q[i] = self.q_min[i] + (q[i] - self.q_min[i]).rem_euclid(TAU);
            }
        }
    }

    pub fn wrapped(&self, q: &Configuration) -> Configuration {
        let mut out = q.clone();
        self.wrap(out.as_mut_slice());
        out
    }

    /// Componentwise difference `a - b`, taken on the circle for full-turn joints.
    pub fn difference(&self, a: &[f64], b: &[f64]) -> Configuration {
        DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|i| {
                let d = a[i] - b[i];
                if self.continuous[i] {
                    wrap_pi(d)
                } else {
                    d
                }
            }),
        )
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.difference(a, b).norm()
    }

    /// Volume of the joint-limit box.
    pub fn box_volume(&self) -> f64 {
        (0..self.n()).map(|i| self.q_max[i] - self.q_min[i]).product()
    }

    /// Upper bound on |G_j| over all configurations.
    pub fn gravity_bound(&self) -> Vec<f64> {
        let g = self.gravity_vec().norm();
        let n = self.n();
        (0..n)
            .map(|j| {
                let mut reach = 0.0;
                let mut total = 0.0;
                for i in j..n {
                    total += self.link_masses[i] * (reach + self.link_coms[i]);
                    reach += self.link_lengths[i];
                }
                g * total
            })
            .collect()
    }

    /// Setup-time inverse kinematics on the true model (damped least squares from `seed`).
    /// Returns None if the target is not reached within tolerance or the solution leaves the limits.
    pub fn inverse_kinematics(&self, target: &Vector3<f64>, seed: &[f64]) -> Option<Configuration> {
        let mut q = DVector::from_column_slice(seed);
        let lambda2 = 1e-4;
        for _ in 0..500 {
            let e = target - self.forward_kinematics(q.as_slice());
            if e.norm() < 1e-10 {
                return self.within_limits(q.as_slice()).then(|| self.wrapped(&q));
            }
            let j = self.tip_jacobian(q.as_slice());
            let jjt = &j * j.transpose() + DMatrix::identity(3, 3) * lambda2;
            let y = jjt.lu().solve(&DVector::from_column_slice(e.as_slice()))?;
            let mut dq = j.transpose() * y;
            let step = dq.amax();
            if step > 0.2 {
                dq *= 0.2 / step;
            }
            q += dq;
        }
        None
    }
}

pub fn wrap_pi(x: f64) -> f64 {
    let y = (x + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    y
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SettleParams {
    pub dt: f64,
    /// rad/s, infinity norm.
    pub vel_tol: f64,
    /// Simulated seconds the velocity must stay below tolerance.
    pub hold_time: f64,
    /// N m, infinity norm of G(q) - tau.
    pub eq_tol: f64,
    pub max_time: f64,
    /// Finish a quiescent state with Newton steps on G(q) = tau.
    pub polish: bool,
}

impl Default for SettleParams {
    fn default() -> Self {
        SettleParams { dt: 1e-3, vel_tol: 1e-4, hold_time: 0.2, eq_tol: 1e-6, max_time: 30.0, polish: true }
    }
}

impl SettleParams {
    pub fn max_steps(&self) -> usize {
        (self.max_time / self.dt).ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum SettleStatus {
    Settled,
    LimitViolation,
    Timeout,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SettleOutcome {
    pub status: SettleStatus,
    pub q_final: Configuration,
    pub steps: usize,
}

impl SettleOutcome {
    pub fn settled(&self) -> bool {
        self.status == SettleStatus::Settled
    }
}

/// Integrator state for one arm. Holds its own scratch buffers, so distinct plants can run in
/// parallel over a shared model.
#[derive(Clone, Debug)]
pub struct Plant<'a> {
    pub model: &'a ManipulatorModel,
    pub q: Configuration,
    pub qd: DVector<f64>,
    mass: DMatrix<f64>,
    rhs: DVector<f64>,
    vel: Vec<Vector3<f64>>,
    omega: Vec<Vector3<f64>>,
}

impl<'a> Plant<'a> {
    pub fn new(model: &'a ManipulatorModel, q0: Configuration) -> Self {
        let n = model.n();
        Plant {
            model,
            q: q0,
            qd: DVector::zeros(n),
            mass: DMatrix::zeros(n, n),
            rhs: DVector::zeros(n),
            vel: vec![Vector3::zeros(); n + 1],
            omega: vec![Vector3::zeros(); n + 1],
        }
    }

    /// Puts the arm at rest at `q`.
    pub fn reset(&mut self, q: Configuration) {
        self.q = q;
        self.qd.fill(0.0);
    }

    /// Joint accelerations of `M qdd + C qd + D qd + G = tau` at the current state.
    pub fn acceleration(&mut self, tau: &[f64]) -> DVector<f64> {
        let m = self.model;
        let n = m.n();
        let f = m.frames(self.q.as_slice());
        let qd = &self.qd;
        // angular velocity of link i (omega[i+1]); omega[0] is the base
        self.omega[0] = Vector3::zeros();
        for i in 0..n {
            self.omega[i + 1] = self.omega[i] + f.axes[i] * qd[i];
        }
        // velocities of joint origins (vel[i] = velocity of o_i)
        self.vel[0] = Vector3::zeros();
        for i in 0..n {
            let seg = f.origins[i + 1] - f.origins[i];
            self.vel[i + 1] = self.vel[i] + self.omega[i + 1].cross(&seg);
        }
        self.mass.fill(0.0);
        self.rhs.fill(0.0);
        for i in 0..n {
            let p = f.coms[i];
            let mi = m.link_masses[i];
            let vp = self.vel[i] + self.omega[i + 1].cross(&(p - f.origins[i]));
            // velocity-product acceleration of the point mass
            let mut bias = Vector3::zeros();
            for j in 0..=i {
                let zdot = self.omega[j].cross(&f.axes[j]);
                let r = p - f.origins[j];
                bias += (zdot.cross(&r) + f.axes[j].cross(&(vp - self.vel[j]))) * qd[j];
            }
            for j in 0..=i {
                let cj = f.axes[j].cross(&(p - f.origins[j]));
                self.rhs[j] -= mi * cj.dot(&bias);
                for k in 0..=j {
                    let ck = f.axes[k].cross(&(p - f.origins[k]));
                    self.mass[(j, k)] += mi * cj.dot(&ck);
                }
            }
        }
        let grav = m.gravity_from_frames(&f);
        for j in 0..n {
            for k in 0..j {
                self.mass[(k, j)] = self.mass[(j, k)];
            }
            self.mass[(j, j)] += m.armature[j];
            self.rhs[j] += tau[j] - grav[j] - m.viscous_damping[j] * qd[j];
        }
        match self.mass.clone().cholesky() {
            Some(ch) => ch.solve(&self.rhs),
            None => self.mass.clone().lu().solve(&self.rhs).unwrap_or_else(|| DVector::zeros(n)),
        }
    }

    /// One semi-implicit Euler step.
    pub fn step(&mut self, tau: &[f64], dt: f64) {
        let qdd = self.acceleration(tau);
        self.qd.axpy(dt, &qdd, 1.0);
        self.q.axpy(dt, &self.qd, 1.0);
    }

    pub fn kinetic_energy(&mut self) -> f64 {
        let n = self.model.n();
        let _ = self.acceleration(&vec![0.0; n]);
        0.5 * self.qd.dot(&(&self.mass * &self.qd))
    }

    /// Holds `tau` until the arm settles, crosses a limit or times out. The arm state is kept,
    /// so consecutive calls continue from the previous rest configuration.
    pub fn settle(&mut self, tau: &[f64], params: &SettleParams) -> SettleOutcome {
        self.settle_observed(tau, params, |_| {})
    }

    pub fn settle_observed(
        &mut self,
        tau: &[f64],
        params: &SettleParams,
        mut observe: impl FnMut(&Configuration),
    ) -> SettleOutcome {
        let hold_steps = (params.hold_time / params.dt).round().max(1.0) as usize;
        let max_steps = params.max_steps();
        let mut quiet = 0usize;
        let tau_v = DVector::from_column_slice(tau);
        for step in 1..=max_steps {
            self.step(tau, params.dt);
            observe(&self.q);
            if !self.model.within_limits(self.q.as_slice()) {
                return SettleOutcome { status: SettleStatus::LimitViolation, q_final: self.q.clone(), steps: step };
            }
            if self.qd.amax() < params.vel_tol {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= hold_steps && quiet % hold_steps == 0 {
                let res = (self.model.gravity_term(self.q.as_slice()) - &tau_v).amax();
                let done = if res <= params.eq_tol {
                    true
                } else if params.polish {
                    match polish(self.model, &self.q, &tau_v, params.eq_tol) {
                        Some(q) => {
                            self.q = q;
                            true
                        }
                        None => false,
                    }
                } else {
                    false
                };
                if done {
                    self.qd.fill(0.0);
                    self.model.wrap(self.q.as_mut_slice());
                    return SettleOutcome { status: SettleStatus::Settled, q_final: self.q.clone(), steps: step };
                }
            }
        }
        SettleOutcome { status: SettleStatus::Timeout, q_final: self.q.clone(), steps: max_steps }
    }
}

/// Newton refinement of a quiescent state onto the nearby stable root of G(q) = tau.
/// Rejects the refinement if it travels far, leaves the limits or lands on a non-minimum.
fn polish(model: &ManipulatorModel, q0: &Configuration, tau: &TorqueVector, eq_tol: f64) -> Option<Configuration> {
    let mut q = q0.clone();
    for _ in 0..30 {
        let r = model.gravity_term(q.as_slice()) - tau;
        if r.amax() <= 0.1 * eq_tol {
            break;
        }
        let dq = model.gravity_jacobian(q.as_slice()).lu().solve(&r)?;
        q -= dq;
        if (&q - q0).amax() > 1e-2 {
            return None;
        }
    }
    let ok = (model.gravity_term(q.as_slice()) - tau).amax() <= eq_tol
        && model.within_limits(q.as_slice())
        && model.is_stable_equilibrium(q.as_slice());
    ok.then_some(q)
}

/// Settles a fresh plant started at rest at `q0`.
pub fn settle(model: &ManipulatorModel, q0: &Configuration, tau: &TorqueVector, params: &SettleParams) -> SettleOutcome {
    Plant::new(model, q0.clone()).settle(tau.as_slice(), params)
}

/// Newton solve of G(q) = tau from `seed`, without stability requirement. Used for static
/// probing of level sets.
pub fn solve_static(model: &ManipulatorModel, seed: &Configuration, tau: &TorqueVector, tol: f64) -> Option<Configuration> {
    let mut q = seed.clone();
    for _ in 0..50 {
        let r = model.gravity_term(q.as_slice()) - tau;
        if r.amax() <= tol {
            if !model.within_limits(q.as_slice()) {
                return None;
            }
            model.wrap(q.as_mut_slice());
            return Some(q);
        }
        let h = model.gravity_jacobian(q.as_slice());
        // damped step keeps the iteration sane near singular Hessians
        let lambda = 1e-10 * (1.0 + h.amax());
        let hth = h.transpose() * &h + DMatrix::identity(model.n(), model.n()) * lambda;
        let mut dq = hth.cholesky()?.solve(&(h.transpose() * r));
        let s = dq.amax();
        if s > 0.5 {
            dq *= 0.5 / s;
        }
        q -= dq;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    pub(crate) fn planar_2r() -> ManipulatorModel {
        ManipulatorModel::from_toml_str(
            r#"
            name = "2r"
            link_lengths = [0.3, 0.3]
            link_masses = [1.0, 1.0]
            link_coms = [0.15, 0.15]
            joint_axes = [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]
            q_min = [-3.1, -2.6]
            q_max = [0.0, 2.6]
            viscous_damping = [2.0, 0.5]
            home_configuration = [-1.5707963267948966, 0.0]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn hanging_arm_has_zero_torque() {
        let m = planar_2r();
        let t = m.gravity_term(&[-FRAC_PI_2, 0.0]);
        assert!(t.amax() < 1e-12);
    }

    #[test]
    fn stretched_arm_torque() {
        let m = planar_2r();
        let t = m.gravity_term(&[0.0, 0.0]);
        let g = 9.81;
        assert!((t[0] - g * (0.15 + 0.45)).abs() < 1e-12);
        assert!((t[1] - g * 0.15).abs() < 1e-12);
    }

    #[test]
    fn fk_zero_and_quarter_turn() {
        let m = planar_2r();
        let p = m.forward_kinematics(&[0.0, 0.0]);
        assert!((p - Vector3::new(0.6, 0.0, 0.0)).norm() < 1e-15);
        let p = m.forward_kinematics(&[FRAC_PI_2, 0.0]);
        assert!((p - Vector3::new(0.0, 0.6, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn limits_are_closed() {
        let m = planar_2r();
        assert!(m.within_limits(&m.home_configuration));
        assert!(m.within_limits(&m.q_min));
        assert!(m.within_limits(&m.q_max));
        let over: Vec<f64> = m.q_max.iter().map(|x| x + 1e-9).collect();
        assert!(!m.within_limits(&over));
    }

    #[test]
    fn energy_zero_at_home_difference() {
        let m = planar_2r();
        let h = m.home_configuration.clone();
        assert_eq!(m.potential_energy(&h) - m.potential_energy(&h), 0.0);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let m = planar_2r();
        let q = [-0.7, 1.1];
        let h = m.gravity_jacobian(&q);
        let e = 1e-6;
        for k in 0..2 {
            let mut a = q;
            let mut b = q;
            a[k] += e;
            b[k] -= e;
            let col = (m.gravity_term(&a) - m.gravity_term(&b)) / (2.0 * e);
            for j in 0..2 {
                assert!((col[j] - h[(j, k)]).abs() < 1e-7, "{j}{k}");
            }
        }
    }

    #[test]
    fn settle_at_equilibrium_stays() {
        let m = planar_2r();
        let q0 = DVector::from_vec(vec![-1.2, 0.4]);
        let tau = m.gravity_term(q0.as_slice());
        let out = settle(&m, &q0, &tau, &SettleParams::default());
        assert!(out.settled());
        assert!((out.q_final - q0).amax() < 1e-6);
    }

    #[test]
    fn zero_torque_hangs_down() {
        let m = planar_2r();
        let q0 = DVector::from_vec(vec![-1.0, 0.5]);
        let out = settle(&m, &q0, &DVector::zeros(2), &SettleParams::default());
        assert!(out.settled(), "{:?}", out.status);
        assert!(m.gravity_term(out.q_final.as_slice()).amax() <= 1e-6);
    }

    #[test]
    fn huge_torque_violates_limits() {
        let m = planar_2r();
        let out = settle(&m, &m.home(), &DVector::from_vec(vec![50.0, 20.0]), &SettleParams::default());
        assert_eq!(out.status, SettleStatus::LimitViolation);
    }

    #[test]
    fn wrap_pi_range() {
        for x in [-10.0, -3.2, 0.0, 3.2, 7.0] {
            let y = wrap_pi(x);
            assert!(y >= -std::f64::consts::PI && y < std::f64::consts::PI);
            assert!(((x - y) / TAU - ((x - y) / TAU).round()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_model() {
        let mut m = planar_2r();
        m.link_masses[0] = 0.0;
        assert!(m.validate().is_err());
        let mut m = planar_2r();
        m.link_coms[1] = 0.5;
        assert!(m.validate().is_err());
        let mut m = planar_2r();
        m.home_configuration[0] = 1.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn ik_recovers_configuration() {
        let m = planar_2r();
        let q = [-1.2, 0.9];
        let x = m.forward_kinematics(&q);
        let sol = m.inverse_kinematics(&x, &m.home_configuration).unwrap();
        assert!((m.forward_kinematics(sol.as_slice()) - x).norm() < 1e-9);
    }
}
