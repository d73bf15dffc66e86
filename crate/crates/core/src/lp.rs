//! Dense two-phase simplex for the small linear programs used throughout the
//! planner: emptiness and membership tests, Chebyshev centers, bounding boxes
//! and the stacked sequence program.
//!
//! Every variable is free. Internally each one is split into a nonnegative
//! pair, inequalities receive slacks and rows with a negative right-hand side
//! (and all equality rows) receive artificials for phase one.
//!
//! Pivoting uses Dantzig's most-negative reduced cost and switches to Bland's
//! rule while the method is stalling on degenerate pivots. Both rules are
//! deterministic, so identical inputs always produce identical witnesses.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feasibility tolerance applied when verifying witnesses.
pub const FEAS_TOL: f64 = 1e-7;
/// Entries below this magnitude never serve as pivots.
pub const PIVOT_TOL: f64 = 1e-9;

const DEGENERATE_STREAK_FOR_BLAND: usize = 30;
const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub coeffs: DVector<f64>,
    pub sense: Sense,
}

/// `A_ineq x <= b_ineq`, `A_eq x = b_eq`, optional linear objective; `x` free.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    n_vars: usize,
    a_ineq: DMatrix<f64>,
    b_ineq: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    objective: Option<Objective>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub witness: Option<DVector<f64>>,
    pub objective_value: Option<f64>,
}

impl LpResult {
    fn infeasible() -> Self {
        Self { status: LpStatus::Infeasible, witness: None, objective_value: None }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == LpStatus::Feasible
    }
}

impl LinearProgram {
    /// A program over `n_vars` free variables with no constraints yet.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            a_ineq: DMatrix::zeros(0, n_vars),
            b_ineq: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n_vars),
            b_eq: DVector::zeros(0),
            objective: None,
        }
    }

    /// Builds a program from raw parts, checking shapes and finiteness.
    pub fn from_parts(
        a_ineq: DMatrix<f64>,
        b_ineq: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    ) -> Result<Self> {
        let lp = Self {
            n_vars: a_ineq.ncols(),
            a_ineq,
            b_ineq,
            a_eq,
            b_eq,
            objective: None,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn a_ineq(&self) -> &DMatrix<f64> {
        &self.a_ineq
    }

    pub fn b_ineq(&self) -> &DVector<f64> {
        &self.b_ineq
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn objective(&self) -> Option<&Objective> {
        self.objective.as_ref()
    }

    pub fn add_inequalities(&mut self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
        check_block(self.n_vars, a, b)?;
        self.a_ineq = stack_rows(&self.a_ineq, a);
        self.b_ineq = stack_vec(&self.b_ineq, b);
        Ok(())
    }

    pub fn add_equalities(&mut self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
        check_block(self.n_vars, a, b)?;
        self.a_eq = stack_rows(&self.a_eq, a);
        self.b_eq = stack_vec(&self.b_eq, b);
        Ok(())
    }

    pub fn set_objective(&mut self, coeffs: DVector<f64>, sense: Sense) -> Result<()> {
        if coeffs.len() != self.n_vars {
            return Err(Error::MalformedProgram(format!(
                "objective has {} coefficients, program has {} variables",
                coeffs.len(),
                self.n_vars
            )));
        }
        self.objective = Some(Objective { coeffs, sense });
        Ok(())
    }

    pub fn clear_objective(&mut self) {
        self.objective = None;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars;
        if self.a_ineq.ncols() != n || self.a_eq.ncols() != n {
            return Err(Error::MalformedProgram("column count differs from n_vars".into()));
        }
        if self.a_ineq.nrows() != self.b_ineq.len() {
            return Err(Error::MalformedProgram(format!(
                "inequality block has {} rows but {} right-hand sides",
                self.a_ineq.nrows(),
                self.b_ineq.len()
            )));
        }
        if self.a_eq.nrows() != self.b_eq.len() {
            return Err(Error::MalformedProgram(format!(
                "equality block has {} rows but {} right-hand sides",
                self.a_eq.nrows(),
                self.b_eq.len()
            )));
        }
        let finite = self.a_ineq.iter().all(|v| v.is_finite())
            && self.b_ineq.iter().all(|v| v.is_finite())
            && self.a_eq.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite())
            && self
                .objective
                .as_ref()
                .is_none_or(|o| o.coeffs.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::MalformedProgram("non-finite entry".into()));
        }
        Ok(())
    }

    /// Largest constraint violation of `x`: inequality excess and equality
    /// residual magnitude.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        if self.a_ineq.nrows() > 0 {
            let r = &self.a_ineq * x - &self.b_ineq;
            worst = r.iter().fold(worst, |w, &v| w.max(v));
        }
        if self.a_eq.nrows() > 0 {
            let r = &self.a_eq * x - &self.b_eq;
            worst = r.iter().fold(worst, |w, &v| w.max(v.abs()));
        }
        worst
    }
}

fn check_block(n: usize, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    if a.ncols() != n {
        return Err(Error::MalformedProgram(format!(
            "block has {} columns, program has {} variables",
            a.ncols(),
            n
        )));
    }
    if a.nrows() != b.len() {
        return Err(Error::MalformedProgram(format!(
            "block has {} rows but {} right-hand sides",
            a.nrows(),
            b.len()
        )));
    }
    Ok(())
}

pub(crate) fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = top.ncols().max(bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), cols);
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols())).copy_from(bottom);
    out
}

pub(crate) fn stack_vec(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(top.len() + bottom.len(), top.iter().chain(bottom.iter()).copied())
}

/// Finds any point satisfying the constraints, ignoring the objective.
pub fn solve_feasibility(lp: &LinearProgram) -> Result<LpResult> {
    lp.validate()?;
    let mut tab = Tableau::build(lp);
    if !tab.phase_one()? {
        return Ok(LpResult::infeasible());
    }
    let witness = tab.witness();
    Ok(LpResult { status: LpStatus::Feasible, witness: Some(witness), objective_value: None })
}

/// Optimizes the program's objective.
pub fn solve_optimize(lp: &LinearProgram) -> Result<LpResult> {
    lp.validate()?;
    let objective = lp
        .objective
        .as_ref()
        .ok_or_else(|| Error::MalformedProgram("solve_optimize requires an objective".into()))?;
    let mut tab = Tableau::build(lp);
    if !tab.phase_one()? {
        return Ok(LpResult::infeasible());
    }
    let sign = match objective.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let costs: Vec<f64> = objective.coeffs.iter().map(|c| sign * c).collect();
    if !tab.phase_two(&costs)? {
        return Ok(LpResult { status: LpStatus::Unbounded, witness: None, objective_value: None });
    }
    let witness = tab.witness();
    let value = objective.coeffs.dot(&witness);
    Ok(LpResult { status: LpStatus::Feasible, witness: Some(witness), objective_value: Some(value) })
}

/// Outcome of [`chebyshev_center`].
#[derive(Clone, Debug, PartialEq)]
pub enum ChebyshevBall {
    Ball { center: DVector<f64>, radius: f64 },
    Empty,
}

/// Center and radius of the largest ball inscribed in `{x : A x <= b}`.
///
/// Zero rows of `A` are ignored when they are satisfied (`b_i >= 0`) and make
/// the set empty otherwise. An unbounded inscribed radius is reported as
/// [`Error::UnboundedDirection`].
pub fn chebyshev_center(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<ChebyshevBall> {
    check_block(a.ncols(), a, b)?;
    let n = a.ncols();
    let norms: Vec<f64> = a.row_iter().map(|r| r.norm()).collect();
    let mut ext = DMatrix::zeros(a.nrows() + 1, n + 1);
    let mut rhs = DVector::zeros(a.nrows() + 1);
    for (i, norm) in norms.iter().enumerate() {
        ext.view_mut((i, 0), (1, n)).copy_from(&a.row(i));
        ext[(i, n)] = *norm;
        rhs[i] = b[i];
    }
    // radius >= 0
    ext[(a.nrows(), n)] = -1.0;
    let mut lp = LinearProgram::from_parts(ext, rhs, DMatrix::zeros(0, n + 1), DVector::zeros(0))?;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    lp.set_objective(c, Sense::Maximize)?;
    let res = solve_optimize(&lp)?;
    match res.status {
        LpStatus::Infeasible => Ok(ChebyshevBall::Empty),
        LpStatus::Unbounded => Err(Error::UnboundedDirection(n)),
        LpStatus::Feasible => {
            let w = res.witness.expect("feasible result carries a witness");
            let radius = w[n].max(0.0);
            Ok(ChebyshevBall::Ball { center: w.rows(0, n).into_owned(), radius })
        }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    n_vars: usize,
    first_artificial: usize,
    /// Row-major `rows x (cols + 1)`; the last column holds the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs of the current objective (length `cols`) and `-z` at the end.
    reduced: Vec<f64>,
    banned: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars;
        let q = lp.a_ineq.nrows();
        let p = lp.a_eq.nrows();
        let rows = q + p;
        let mut needs_art = Vec::with_capacity(rows);
        for i in 0..q {
            needs_art.push(lp.b_ineq[i] < 0.0);
        }
        needs_art.extend(std::iter::repeat_n(true, p));
        let n_art = needs_art.iter().filter(|&&x| x).count();
        let first_artificial = 2 * n + q;
        let cols = first_artificial + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; rows * width];
        let mut basis = vec![0; rows];
        let mut art = first_artificial;
        for r in 0..rows {
            let (coeffs, rhs, slack) = if r < q {
                (lp.a_ineq.row(r), lp.b_ineq[r], Some(2 * n + r))
            } else {
                (lp.a_eq.row(r - q), lp.b_eq[r - q], None)
            };
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            let row = &mut data[r * width..(r + 1) * width];
            for j in 0..n {
                row[j] = sign * coeffs[j];
                row[n + j] = -sign * coeffs[j];
            }
            if let Some(s) = slack {
                row[s] = sign;
            }
            row[cols] = sign * rhs;
            if needs_art[r] {
                row[art] = 1.0;
                basis[r] = art;
                art += 1;
            } else {
                basis[r] = slack.expect("only inequality rows start on a slack");
            }
        }
        Self {
            rows,
            cols,
            n_vars: n,
            first_artificial,
            data,
            basis,
            reduced: vec![0.0; cols + 1],
            banned: vec![false; cols],
        }
    }

    #[inline]
    fn width(&self) -> usize {
        self.cols + 1
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs_scale(&self) -> f64 {
        (0..self.rows).fold(1.0_f64, |m, r| m.max(self.at(r, self.cols).abs()))
    }

    /// Returns whether the constraints are feasible.
    fn phase_one(&mut self) -> Result<bool> {
        if self.first_artificial == self.cols {
            return Ok(true);
        }
        let width = self.width();
        self.reduced.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.rows {
            if self.basis[r] >= self.first_artificial {
                let row = &self.data[r * width..(r + 1) * width];
                for (d, &a) in self.reduced.iter_mut().zip(row.iter()) {
                    *d -= a;
                }
            }
        }
        for j in self.first_artificial..self.cols {
            self.reduced[j] = 0.0;
        }
        let bounded = self.iterate()?;
        debug_assert!(bounded, "phase one objective is bounded below by zero");
        let infeasibility = -self.reduced[self.cols];
        let tol = PIVOT_TOL * self.rhs_scale().max(1.0) * 10.0;
        if infeasibility > tol {
            return Ok(false);
        }
        self.drive_out_artificials();
        for j in self.first_artificial..self.cols {
            self.banned[j] = true;
        }
        Ok(true)
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.first_artificial {
                let v = self.at(r, j).abs();
                if v > PIVOT_TOL && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                self.pivot(r, j);
            }
        }
    }

    /// Returns false when the objective is unbounded below.
    fn phase_two(&mut self, costs: &[f64]) -> Result<bool> {
        let n = self.n_vars;
        let width = self.width();
        let mut c = vec![0.0; self.cols];
        for j in 0..n {
            c[j] = costs[j];
            c[n + j] = -costs[j];
        }
        self.reduced[..self.cols].copy_from_slice(&c);
        self.reduced[self.cols] = 0.0;
        for r in 0..self.rows {
            let cb = if self.basis[r] < self.cols { c[self.basis[r]] } else { 0.0 };
            if cb != 0.0 {
                let row = &self.data[r * width..(r + 1) * width];
                for (d, &a) in self.reduced.iter_mut().zip(row.iter()) {
                    *d -= cb * a;
                }
            }
        }
        self.iterate()
    }

    fn iterate(&mut self) -> Result<bool> {
        let mut degenerate_streak = 0usize;
        for _ in 0..MAX_PIVOTS {
            let bland = degenerate_streak >= DEGENERATE_STREAK_FOR_BLAND;
            let Some(enter) = self.entering(bland) else {
                return Ok(true);
            };
            let Some(leave) = self.leaving(enter) else {
                return Ok(false);
            };
            let degenerate = self.at(leave, self.cols).abs() <= PIVOT_TOL;
            degenerate_streak = if degenerate { degenerate_streak + 1 } else { 0 };
            self.pivot(leave, enter);
        }
        Err(Error::IterationLimit(MAX_PIVOTS))
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            if self.banned[j] {
                continue;
            }
            let d = self.reduced[j];
            if d < -PIVOT_TOL {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((j, d));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, enter: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, enter);
            if a > PIVOT_TOL {
                let ratio = self.at(r, self.cols).max(0.0) / a;
                match best {
                    None => best = Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < bratio - 1e-12
                            || (ratio <= bratio + 1e-12 && self.basis[r] < self.basis[br])
                        {
                            best = Some((r, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(r, _)| r)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.width();
        let piv = self.data[pr * width + pc];
        {
            let row = &mut self.data[pr * width..(pr + 1) * width];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[pc] = 1.0;
        }
        let pivot_row: Vec<f64> = self.data[pr * width..(pr + 1) * width].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * width + pc];
            if f != 0.0 {
                let row = &mut self.data[r * width..(r + 1) * width];
                for (v, &p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
                row[pc] = 0.0;
            }
        }
        let f = self.reduced[pc];
        if f != 0.0 {
            for (v, &p) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *v -= f * p;
            }
            self.reduced[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    fn witness(&self) -> DVector<f64> {
        let n = self.n_vars;
        let mut x = DVector::zeros(n);
        for r in 0..self.rows {
            let j = self.basis[r];
            let v = self.at(r, self.cols);
            if j < n {
                x[j] += v;
            } else if j < 2 * n {
                x[j - n] -= v;
            }
        }
        x
    }
}
