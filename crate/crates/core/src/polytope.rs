//! H-representation polytopes: action sets, continuity-conditioned products
//! in kernel coordinates, emptiness tests, bounding boxes, uniform sampling
//! and volume estimation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, ChebyshevBall, LinearProgram, LpStatus, Sense};
use crate::rng::rng_from;

/// Membership slack; boundary points count as inside.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
const KERNEL_TOL: f64 = 1e-10;
/// Below this acceptance fraction rejection sampling falls back to the
/// covariance proxy.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

/// `{ω : A ω <= b}` whose points are all feasible trajectory parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRecord", into = "RegionRecord")]
pub struct PolytopicActionSet {
    id: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Row-major JSON form of an action set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub id: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl TryFrom<RegionRecord> for PolytopicActionSet {
    type Error = Error;

    fn try_from(rec: RegionRecord) -> Result<Self> {
        let n = rec.a.first().map_or(0, Vec::len);
        if rec.a.iter().any(|row| row.len() != n) {
            return Err(Error::MalformedProgram(format!("region {} has ragged rows", rec.id)));
        }
        let a = DMatrix::from_fn(rec.a.len(), n, |i, j| rec.a[i][j]);
        PolytopicActionSet::new(rec.id, a, DVector::from_vec(rec.b))
    }
}

impl From<PolytopicActionSet> for RegionRecord {
    fn from(s: PolytopicActionSet) -> Self {
        RegionRecord {
            id: s.id,
            a: s.a.row_iter().map(|r| r.iter().copied().collect()).collect(),
            b: s.b.iter().copied().collect(),
        }
    }
}

/// JSON container `{"n": .., "regions": [..]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeLibrary {
    pub n: usize,
    pub regions: Vec<PolytopicActionSet>,
}

impl PolytopicActionSet {
    /// Rejects zero-normal rows, shape mismatches and empty sets.
    pub fn new(id: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::MalformedProgram(format!(
                "region {id}: {} rows but {} bounds",
                a.nrows(),
                b.len()
            )));
        }
        if let Some(row) = a.row_iter().position(|r| r.norm() == 0.0) {
            return Err(Error::ZeroNormal(row));
        }
        if is_empty(&a, &b)? {
            return Err(Error::EmptySet);
        }
        Ok(Self { id, a, b })
    }

    /// Axis-aligned box `lo <= ω <= hi`.
    pub fn from_box(id: usize, lo: &[f64], hi: &[f64]) -> Result<Self> {
        let (a, b) = box_constraints(lo, hi)?;
        Self::new(id, a, b)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, omega: &DVector<f64>) -> Result<bool> {
        if omega.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: omega.len() });
        }
        Ok(self.slack_min(omega) >= -MEMBERSHIP_TOL)
    }

    /// Smallest slack `min_i (b_i - a_i ω)`; negative outside.
    pub fn slack_min(&self, omega: &DVector<f64>) -> f64 {
        (0..self.a.nrows())
            .map(|i| self.b[i] - self.a.row(i).dot(&omega.transpose()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Appends the halfspace `normal · ω <= offset`, rejecting zero normals.
    /// Callers are responsible for keeping the set nonempty.
    pub(crate) fn push_halfspace(&mut self, normal: &DVector<f64>, offset: f64) -> Result<()> {
        if normal.norm() == 0.0 {
            return Err(Error::ZeroNormal(self.a.nrows()));
        }
        let rows = self.a.nrows();
        self.a = self.a.clone().insert_row(rows, 0.0);
        self.a.set_row(rows, &normal.transpose());
        self.b = self.b.clone().push(offset);
        Ok(())
    }

    pub fn chebyshev(&self) -> Result<(DVector<f64>, f64)> {
        match lp::chebyshev_center(&self.a, &self.b)? {
            ChebyshevBall::Ball { center, radius } => Ok((center, radius)),
            ChebyshevBall::Empty => Err(Error::EmptySet),
        }
    }
}

pub fn box_constraints(lo: &[f64], hi: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
    }
    let n = lo.len();
    let mut a = DMatrix::zeros(2 * n, n);
    let mut b = DVector::zeros(2 * n);
    for i in 0..n {
        a[(2 * i, i)] = 1.0;
        b[2 * i] = hi[i];
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i + 1] = -lo[i];
    }
    Ok((a, b))
}

fn ineq_program(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LinearProgram> {
    LinearProgram::from_parts(a.clone(), b.clone(), DMatrix::zeros(0, a.ncols()), DVector::zeros(0))
}

/// True iff no point satisfies `A ω <= b`.
pub fn is_empty(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<bool> {
    let res = lp::solve_feasibility(&ineq_program(a, b)?)?;
    Ok(res.status != LpStatus::Feasible)
}

/// Per-coordinate `[min, max]` of a nonempty bounded polytope.
pub fn bounding_box(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    let mut lp = ineq_program(a, b)?;
    let n = a.ncols();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let mut bounds = [0.0; 2];
        for (slot, sense) in [Sense::Minimize, Sense::Maximize].into_iter().enumerate() {
            lp.set_objective(e.clone(), sense)?;
            let res = lp::solve_optimize(&lp)?;
            match res.status {
                LpStatus::Feasible => bounds[slot] = res.objective_value.expect("optimal value"),
                LpStatus::Infeasible => return Err(Error::EmptySet),
                LpStatus::Unbounded => return Err(Error::UnboundedDirection(i)),
            }
        }
        out.push((bounds[0], bounds[1]));
    }
    Ok(out)
}

/// Orthonormal basis of the kernel of a full-row-rank matrix.
pub fn kernel_basis(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = h.ncols();
    let rows = h.nrows();
    if rows == 0 {
        return Ok(DMatrix::identity(cols, cols));
    }
    let gram = h.transpose() * h;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let rank = eig.eigenvalues.iter().filter(|&&v| v > 1e-12 * largest.max(1.0)).count();
    if rank < rows {
        return Err(Error::RankDeficientContinuity { rank, rows });
    }
    let dim = cols - rows;
    let mut basis = DMatrix::zeros(cols, dim);
    for (k, &idx) in order.iter().take(dim).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // Sign convention: first entry of largest magnitude is positive.
        let pivot = v.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
        if pivot < 0.0 {
            v = -v;
        }
        basis.set_column(k, &v);
    }
    debug_assert!((h * &basis).abs().max() <= KERNEL_TOL * largest.sqrt().max(1.0));
    Ok(basis)
}

/// `S_i ×_c S_j` expressed in kernel coordinates of the continuity matrix:
/// `Λ = {λ : blockdiag(A_i, A_j) N λ <= [b_i; b_j]}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedProduct {
    pub left_id: usize,
    pub right_id: usize,
    pub lambda_a: DMatrix<f64>,
    pub lambda_b: DVector<f64>,
    pub null_basis: DMatrix<f64>,
    pub dim: usize,
}

pub fn conditioned_product(
    left: &PolytopicActionSet,
    right: &PolytopicActionSet,
    continuity: &DMatrix<f64>,
) -> Result<ConditionedProduct> {
    let basis = kernel_basis(continuity)?;
    ConditionedProduct::with_kernel(left, right, &basis)
}

impl ConditionedProduct {
    /// Builds the product from a precomputed kernel basis of `H_c`.
    pub fn with_kernel(
        left: &PolytopicActionSet,
        right: &PolytopicActionSet,
        null_basis: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = left.dim();
        if right.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: right.dim() });
        }
        if null_basis.nrows() != 2 * n {
            return Err(Error::DimensionMismatch { expected: 2 * n, got: null_basis.nrows() });
        }
        let dim = null_basis.ncols();
        let (qi, qj) = (left.n_constraints(), right.n_constraints());
        let mut lambda_a = DMatrix::zeros(qi + qj, dim);
        lambda_a.view_mut((0, 0), (qi, dim)).copy_from(&(left.a() * null_basis.rows(0, n)));
        lambda_a.view_mut((qi, 0), (qj, dim)).copy_from(&(right.a() * null_basis.rows(n, n)));
        let lambda_b = lp::stack_vec(left.b(), right.b());
        Ok(Self {
            left_id: left.id(),
            right_id: right.id(),
            lambda_a,
            lambda_b,
            null_basis: null_basis.clone(),
            dim,
        })
    }

    pub fn is_empty(&self) -> Result<bool> {
        is_empty(&self.lambda_a, &self.lambda_b)
    }

    /// Maps kernel coordinates to the stacked pair `ω̂ = N λ`.
    pub fn lift(&self, lambda: &DVector<f64>) -> DVector<f64> {
        &self.null_basis * lambda
    }
}

/// Uniform sampler over `{x : A x <= b}` by hit-and-run.
pub struct HitAndRun<'a, R: Rng> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    x: DVector<f64>,
    slack: DVector<f64>,
    dir: DVector<f64>,
    ad: DVector<f64>,
    rng: R,
}

impl<'a, R: Rng> HitAndRun<'a, R> {
    /// `start` must be feasible; an interior start mixes faster.
    pub fn new(a: &'a DMatrix<f64>, b: &'a DVector<f64>, start: DVector<f64>, rng: R) -> Self {
        let slack = b - a * &start;
        let (dir, ad) = (DVector::zeros(start.len()), DVector::zeros(b.len()));
        Self { a, b, x: start, slack, dir, ad, rng }
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.x
    }

    /// One hit-and-run step; the chain stays put if the chord is degenerate.
    pub fn step(&mut self) -> &DVector<f64> {
        for v in self.dir.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
        let norm = self.dir.norm();
        if norm == 0.0 {
            return &self.x;
        }
        self.dir /= norm;
        self.ad.gemv(1.0, self.a, &self.dir, 0.0);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (&ad, &s) in self.ad.iter().zip(self.slack.iter()) {
            let s = s.max(0.0);
            if ad > 1e-14 {
                hi = hi.min(s / ad);
            } else if ad < -1e-14 {
                lo = lo.max(s / ad);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return &self.x;
        }
        let t = self.rng.random_range(lo..=hi);
        self.x.axpy(t, &self.dir, 1.0);
        self.slack.axpy(-t, &self.ad, 1.0);
        &self.x
    }

    /// Draws `count` samples with `thin` steps between each after `burn_in`.
    pub fn samples(&mut self, count: usize, burn_in: usize, thin: usize) -> Vec<DVector<f64>> {
        for _ in 0..burn_in {
            self.step();
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            for _ in 0..thin.max(1) {
                self.step();
            }
            out.push(self.x.clone());
        }
        // Re-anchor the slack to exact arithmetic to stop drift accumulating.
        self.slack = self.b - self.a * &self.x;
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VolumeMethod {
    RejectionBox,
    GaussianProxy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub method: VolumeMethod,
    pub samples_used: usize,
    pub rng_seed: u64,
}

/// Rejection estimate, falling back to the covariance proxy when fewer than
/// 0.1% of box samples land inside. Empty sets report zero volume.
pub fn estimate_volume(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    budget: usize,
    seed: u64,
) -> Result<VolumeEstimate> {
    match rejection_volume(a, b, budget, seed)? {
        Some(est) => Ok(est),
        None => estimate_volume_with(VolumeMethod::GaussianProxy, a, b, budget, seed),
    }
}

/// Estimates with a fixed method (no fallback). A rejection estimate with
/// low acceptance is still returned as is.
pub fn estimate_volume_with(
    method: VolumeMethod,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    budget: usize,
    seed: u64,
) -> Result<VolumeEstimate> {
    if is_empty(a, b)? {
        return Ok(VolumeEstimate { value: 0.0, method, samples_used: 0, rng_seed: seed });
    }
    match method {
        VolumeMethod::RejectionBox => {
            let bbox = bounding_box(a, b)?;
            Ok(rejection_in_box(a, b, &bbox, budget, seed).0)
        }
        VolumeMethod::GaussianProxy => gaussian_proxy(a, b, budget, seed),
    }
}

/// Returns `None` when the acceptance fraction is below [`MIN_ACCEPTANCE`].
pub fn rejection_volume(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    budget: usize,
    seed: u64,
) -> Result<Option<VolumeEstimate>> {
    if is_empty(a, b)? {
        return Ok(Some(VolumeEstimate {
            value: 0.0,
            method: VolumeMethod::RejectionBox,
            samples_used: 0,
            rng_seed: seed,
        }));
    }
    let bbox = bounding_box(a, b)?;
    let (est, fraction) = rejection_in_box(a, b, &bbox, budget, seed);
    Ok((fraction >= MIN_ACCEPTANCE).then_some(est))
}

fn rejection_in_box(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    bbox: &[(f64, f64)],
    budget: usize,
    seed: u64,
) -> (VolumeEstimate, f64) {
    let mut rng = rng_from(seed);
    let n = bbox.len();
    let box_volume: f64 = bbox.iter().map(|(lo, hi)| (hi - lo).max(0.0)).product();
    let mut x = DVector::zeros(n);
    let mut hits = 0usize;
    for _ in 0..budget {
        for (i, (lo, hi)) in bbox.iter().enumerate() {
            x[i] = if hi > lo { rng.random_range(*lo..*hi) } else { *lo };
        }
        let inside = (0..a.nrows()).all(|r| a.row(r).dot(&x.transpose()) <= b[r] + MEMBERSHIP_TOL);
        if inside {
            hits += 1;
        }
    }
    let fraction = if budget == 0 { 0.0 } else { hits as f64 / budget as f64 };
    (
        VolumeEstimate {
            value: box_volume * fraction,
            method: VolumeMethod::RejectionBox,
            samples_used: budget,
            rng_seed: seed,
        },
        fraction,
    )
}

/// `sqrt(det(12 Σ))` of hit-and-run samples, which equals the exact volume
/// for axis-aligned boxes and tracks volume monotonically for similar shapes.
fn gaussian_proxy(a: &DMatrix<f64>, b: &DVector<f64>, budget: usize, seed: u64) -> Result<VolumeEstimate> {
    let (center, radius) = match lp::chebyshev_center(a, b)? {
        ChebyshevBall::Ball { center, radius } => (center, radius),
        ChebyshevBall::Empty => return Err(Error::EmptySet),
    };
    let n = a.ncols();
    if radius <= 0.0 || budget < 2 {
        return Ok(VolumeEstimate {
            value: 0.0,
            method: VolumeMethod::GaussianProxy,
            samples_used: 0,
            rng_seed: seed,
        });
    }
    let mut chain = HitAndRun::new(a, b, center, rng_from(seed));
    let samples = chain.samples(budget, 10 * n, 2);
    let count = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / count;
    let mut cov = DMatrix::zeros(n, n);
    for s in &samples {
        let d = s - &mean;
        cov += &d * d.transpose();
    }
    cov /= count - 1.0;
    cov *= 12.0;
    let value = match cov.cholesky() {
        Some(ch) => {
            let log_det: f64 = ch.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            (0.5 * log_det).exp()
        }
        None => 0.0,
    };
    Ok(VolumeEstimate { value, method: VolumeMethod::GaussianProxy, samples_used: samples.len(), rng_seed: seed })
}
