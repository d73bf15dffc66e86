//! Affine trajectory parameterization `x(t, ω) = H(t) ω`.
//!
//! A segment is described by `ω = [q0, c_0, .., c_{n-2}]`: the initial angle
//! followed by the Bernstein control values of the angular velocity over the
//! normalized time `τ = t / T`. The angle is the exact running integral of the
//! velocity polynomial, so every row of `H(t)` is in closed form.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State dimension: angle and angular velocity.
pub const STATE_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Parameter count.
    pub n: usize,
    /// Segment horizon in seconds.
    #[serde(rename = "T")]
    pub horizon: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis polynomial `B_{i,d}(τ)`.
pub fn bernstein(i: usize, d: usize, tau: f64) -> f64 {
    if i > d {
        return 0.0;
    }
    binomial(d, i) * tau.powi(i as i32) * (1.0 - tau).powi((d - i) as i32)
}

/// `∫_0^τ B_{i,d}(s) ds = (1/(d+1)) Σ_{j=i+1}^{d+1} B_{j,d+1}(τ)`.
pub fn bernstein_integral(i: usize, d: usize, tau: f64) -> f64 {
    let sum: f64 = (i + 1..=d + 1).map(|j| bernstein(j, d + 1, tau)).sum();
    sum / (d + 1) as f64
}

impl BasisSpec {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        let spec = Self { n, horizon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidConfig(format!("n = {} but at least 3 is required", self.n)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!("horizon T = {} must be positive", self.horizon)));
        }
        Ok(())
    }

    /// Bernstein degree of the velocity polynomial.
    pub fn velocity_degree(&self) -> usize {
        self.n - 2
    }

    fn tau(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        Ok((t / self.horizon).clamp(0.0, 1.0))
    }

    /// Row mapping `ω` to `q(t)`.
    pub fn position_row(&self, t: f64) -> Result<RowDVector<f64>> {
        let tau = self.tau(t)?;
        let d = self.velocity_degree();
        let mut row = RowDVector::zeros(self.n);
        row[0] = 1.0;
        for i in 0..=d {
            row[i + 1] = self.horizon * bernstein_integral(i, d, tau);
        }
        Ok(row)
    }

    /// Row mapping `ω` to `q̇(t)`.
    pub fn velocity_row(&self, t: f64) -> Result<RowDVector<f64>> {
        let tau = self.tau(t)?;
        let d = self.velocity_degree();
        let mut row = RowDVector::zeros(self.n);
        for i in 0..=d {
            row[i + 1] = bernstein(i, d, tau);
        }
        Ok(row)
    }

    /// Row mapping `ω` to `q̈(t)`:
    /// `q̈ = (d/T) Σ_{i<d} (c_{i+1} - c_i) B_{i,d-1}(τ)`.
    pub fn accel_row(&self, t: f64) -> Result<RowDVector<f64>> {
        let tau = self.tau(t)?;
        let d = self.velocity_degree();
        let scale = d as f64 / self.horizon;
        let mut row = RowDVector::zeros(self.n);
        for i in 0..d {
            let b = scale * bernstein(i, d - 1, tau);
            row[i + 1] -= b;
            row[i + 2] += b;
        }
        Ok(row)
    }

    /// `H(t)`, shape `2 x n`.
    pub fn eval_h(&self, t: f64) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(STATE_DIM, self.n);
        h.set_row(0, &self.position_row(t)?);
        h.set_row(1, &self.velocity_row(t)?);
        Ok(h)
    }

    /// State `[q, q̇]` of a single segment at time `t`.
    pub fn state(&self, omega: &DVector<f64>, t: f64) -> Result<[f64; 2]> {
        self.check_len(omega)?;
        Ok([self.position_row(t)?.dot(&omega.transpose()), self.velocity_row(t)?.dot(&omega.transpose())])
    }

    pub fn check_len(&self, omega: &DVector<f64>) -> Result<()> {
        if omega.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: omega.len() });
        }
        Ok(())
    }

    /// Continuity and boundary matrices for `segments` consecutive segments.
    pub fn build_stacked(&self, segments: usize) -> StackedMatrices {
        let n = self.n;
        let l = segments.max(1);
        let h0 = self.eval_h(0.0).expect("t = 0 is in range");
        let ht = self.eval_h(self.horizon).expect("t = T is in range");
        let mut continuity = DMatrix::zeros(STATE_DIM * (l - 1), n * l);
        for i in 0..l - 1 {
            continuity.view_mut((STATE_DIM * i, n * i), (STATE_DIM, n)).copy_from(&ht);
            continuity.view_mut((STATE_DIM * i, n * (i + 1)), (STATE_DIM, n)).copy_from(&(-&h0));
        }
        let mut boundary = DMatrix::zeros(2 * STATE_DIM, n * l);
        boundary.view_mut((0, 0), (STATE_DIM, n)).copy_from(&h0);
        boundary.view_mut((STATE_DIM, n * (l - 1)), (STATE_DIM, n)).copy_from(&ht);
        StackedMatrices { continuity, boundary, segments: l }
    }
}

/// `H_c` (continuity between consecutive segments) and `H_b` (initial state of
/// the first segment stacked over the final state of the last).
#[derive(Clone, Debug, PartialEq)]
pub struct StackedMatrices {
    pub continuity: DMatrix<f64>,
    pub boundary: DMatrix<f64>,
    pub segments: usize,
}
