//! Torque-limited pendulum: inverse dynamics along parameterized segments,
//! the discrete torque constraint, and free-fall seeds.
//!
//! The angle `q` is measured from the stable (hanging) equilibrium, so the
//! required torque is `u = m l² q̈ + m g l sin q`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};

/// On-disk system description: `{"m","l","g","u_max","n","T","d"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub m: f64,
    pub l: f64,
    #[serde(default = "default_gravity")]
    pub g: f64,
    pub u_max: f64,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_check_points")]
    pub d: usize,
}

fn default_gravity() -> f64 {
    9.81
}

fn default_check_points() -> usize {
    11
}

impl SystemConfig {
    /// Constructor with `m = 0.1`, `l = 1`, `g = 9.81`, `d = 11`.
    pub fn standard(n: usize, horizon: f64, u_max: f64) -> Self {
        Self { m: 0.1, l: 1.0, g: default_gravity(), u_max, n, horizon, d: default_check_points() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PendulumSystem {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub u_max: f64,
    pub spec: BasisSpec,
    check_times: Vec<f64>,
    /// Position rows at the check times (`d x n`).
    pos_rows: DMatrix<f64>,
    /// Acceleration rows at the check times (`d x n`).
    acc_rows: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorqueProfile {
    pub times: Vec<f64>,
    pub torques: Vec<f64>,
}

/// Sampled free-fall motion.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrajectory {
    pub times: Vec<f64>,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeedFit {
    Accepted(DVector<f64>),
    /// The fitted parameters exceed the torque bound at some check point.
    Rejected { omega: DVector<f64>, excess: f64 },
}

/// RK4 steps per segment for free-fall simulation; also the dense fit grid.
pub const FREE_FALL_STEPS: usize = 200;

impl PendulumSystem {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let spec = BasisSpec::new(cfg.n, cfg.horizon)?;
        for (name, v) in [("m", cfg.m), ("l", cfg.l), ("g", cfg.g), ("u_max", cfg.u_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be positive")));
            }
        }
        if cfg.d < 2 {
            return Err(Error::InvalidConfig(format!("d = {} must be at least 2", cfg.d)));
        }
        let check_times = (0..cfg.d)
            .map(|k| cfg.horizon * k as f64 / (cfg.d - 1) as f64)
            .collect();
        Ok(Self::assemble(cfg.m, cfg.l, cfg.g, cfg.u_max, spec, check_times))
    }

    fn assemble(mass: f64, length: f64, gravity: f64, u_max: f64, spec: BasisSpec, check_times: Vec<f64>) -> Self {
        let d = check_times.len();
        let mut pos_rows = DMatrix::zeros(d, spec.n);
        let mut acc_rows = DMatrix::zeros(d, spec.n);
        for (k, &t) in check_times.iter().enumerate() {
            pos_rows.set_row(k, &spec.position_row(t).expect("check time in range"));
            acc_rows.set_row(k, &spec.accel_row(t).expect("check time in range"));
        }
        Self { mass, length, gravity, u_max, spec, check_times, pos_rows, acc_rows }
    }

    pub fn config(&self) -> SystemConfig {
        SystemConfig {
            m: self.mass,
            l: self.length,
            g: self.gravity,
            u_max: self.u_max,
            n: self.spec.n,
            horizon: self.spec.horizon,
            d: self.check_times.len(),
        }
    }

    pub fn check_times(&self) -> &[f64] {
        &self.check_times
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }

    fn gravity_torque(&self) -> f64 {
        self.mass * self.gravity * self.length
    }

    /// Natural frequency scale `sqrt(g / l)` in rad/s.
    pub fn natural_rate(&self) -> f64 {
        (self.gravity / self.length).sqrt()
    }

    pub fn torque_at(&self, omega: &DVector<f64>, t: f64) -> Result<f64> {
        self.spec.check_len(omega)?;
        let q = self.spec.position_row(t)?.dot(&omega.transpose());
        let qdd = self.spec.accel_row(t)?.dot(&omega.transpose());
        Ok(self.inertia() * qdd + self.gravity_torque() * q.sin())
    }

    /// Torques at every check time.
    pub fn check_torques(&self, omega: &DVector<f64>) -> DVector<f64> {
        let q = &self.pos_rows * omega;
        let qdd = &self.acc_rows * omega;
        DVector::from_fn(q.len(), |k, _| self.inertia() * qdd[k] + self.gravity_torque() * q[k].sin())
    }

    pub fn torque_profile(&self, omega: &DVector<f64>) -> TorqueProfile {
        TorqueProfile { times: self.check_times.clone(), torques: self.check_torques(omega).iter().copied().collect() }
    }

    /// `(argmax_k, max_k |u(t_k)| - u_max)`; feasible iff the excess is `<= 0`.
    pub fn max_violation(&self, omega: &DVector<f64>) -> (usize, f64) {
        let u = self.check_torques(omega);
        let mut best = (0, f64::NEG_INFINITY);
        for (k, v) in u.iter().enumerate() {
            let excess = v.abs() - self.u_max;
            if excess > best.1 {
                best = (k, excess);
            }
        }
        best
    }

    /// Gradient of `|u(t_k, ω)|` with respect to `ω`.
    pub fn violation_gradient(&self, omega: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        if k >= self.check_times.len() {
            return Err(Error::DimensionMismatch { expected: self.check_times.len(), got: k });
        }
        self.spec.check_len(omega)?;
        let pos = self.pos_rows.row(k);
        let acc = self.acc_rows.row(k);
        let q = pos.dot(&omega.transpose());
        let u = self.inertia() * acc.dot(&omega.transpose()) + self.gravity_torque() * q.sin();
        if u == 0.0 {
            return Err(Error::ZeroTorqueAmbiguity(k));
        }
        let grad = (acc * self.inertia() + pos * (self.gravity_torque() * q.cos())) * u.signum();
        Ok(grad.transpose())
    }

    fn free_fall_accel(&self, q: f64) -> f64 {
        -(self.gravity / self.length) * q.sin()
    }

    fn rk4_step(&self, q: f64, qd: f64, h: f64) -> (f64, f64) {
        let k1 = (qd, self.free_fall_accel(q));
        let k2 = (qd + 0.5 * h * k1.1, self.free_fall_accel(q + 0.5 * h * k1.0));
        let k3 = (qd + 0.5 * h * k2.1, self.free_fall_accel(q + 0.5 * h * k2.0));
        let k4 = (qd + h * k3.1, self.free_fall_accel(q + h * k3.0));
        (
            q + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            qd + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        )
    }

    /// Zero-torque motion over `[0, T]` by fixed-step RK4 (step `T/200`),
    /// sampled on the dense grid of 201 points.
    pub fn simulate_free_fall(&self, q0: f64, qdot0: f64) -> SampledTrajectory {
        let h = self.spec.horizon / FREE_FALL_STEPS as f64;
        let mut out = SampledTrajectory {
            times: Vec::with_capacity(FREE_FALL_STEPS + 1),
            q: Vec::with_capacity(FREE_FALL_STEPS + 1),
            qdot: Vec::with_capacity(FREE_FALL_STEPS + 1),
        };
        let (mut q, mut qd) = (q0, qdot0);
        for step in 0..=FREE_FALL_STEPS {
            out.times.push(step as f64 * h);
            out.q.push(q);
            out.qdot.push(qd);
            if step < FREE_FALL_STEPS {
                (q, qd) = self.rk4_step(q, qd, h);
            }
        }
        out
    }

    /// Free-fall state at the check times, each integrated from the nearest
    /// dense grid point below it.
    pub fn free_fall_at_checks(&self, q0: f64, qdot0: f64) -> SampledTrajectory {
        let dense = self.simulate_free_fall(q0, qdot0);
        let h = self.spec.horizon / FREE_FALL_STEPS as f64;
        let mut out = SampledTrajectory { times: vec![], q: vec![], qdot: vec![] };
        for &t in &self.check_times {
            let idx = ((t / h).floor() as usize).min(FREE_FALL_STEPS);
            let rem = t - dense.times[idx];
            let (q, qd) = if rem > 1e-15 {
                self.rk4_step(dense.q[idx], dense.qdot[idx], rem)
            } else {
                (dense.q[idx], dense.qdot[idx])
            };
            out.times.push(t);
            out.q.push(q);
            out.qdot.push(qd);
        }
        out
    }

    pub fn energy(&self, q: f64, qdot: f64) -> f64 {
        0.5 * self.inertia() * qdot * qdot - self.gravity_torque() * q.cos()
    }

    /// Least-squares fit of the velocity control values to free fall on the
    /// dense grid, with `q0` taken exactly.
    pub fn fit_free_fall(&self, q0: f64, qdot0: f64) -> SeedFit {
        let sim = self.simulate_free_fall(q0, qdot0);
        let n = self.spec.n;
        let rows = sim.times.len();
        let mut design = DMatrix::zeros(rows, n - 1);
        for (r, &t) in sim.times.iter().enumerate() {
            let row = self.spec.velocity_row(t).expect("grid time in range");
            design.set_row(r, &row.columns(1, n - 1));
        }
        let target = DVector::from_vec(sim.qdot);
        let coeffs = design
            .svd(true, true)
            .solve(&target, 1e-12)
            .expect("SVD computed with both factors");
        let mut omega = DVector::zeros(n);
        omega[0] = q0;
        omega.rows_mut(1, n - 1).copy_from(&coeffs);
        let (_, excess) = self.max_violation(&omega);
        if excess > 0.0 {
            SeedFit::Rejected { omega, excess }
        } else {
            SeedFit::Accepted(omega)
        }
    }

    #[cfg(test)]
    pub(crate) fn with_gravity(&self, gravity: f64) -> Self {
        Self::assemble(self.mass, self.length, gravity, self.u_max, self.spec, self.check_times.clone())
    }
}
