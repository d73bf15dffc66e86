//! Sequence-then-solve: walks through the full mode graph are enumerated in
//! order of cost and each one is tested with a single stacked LP. The first
//! admissible walk is the plan.
//!
//! A walk is infeasible as a whole once some prefix of it cannot be reached
//! from `x0`, and prefix feasibility is monotone in the prefix length. When a
//! candidate fails, binary search finds its shortest unreachable prefix, and
//! later candidates that share it are skipped without solving anything.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::STATE_DIM;
use crate::decomposition::RegionLibrary;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, Sense, FEAS_TOL};
use crate::mode_graph::{Adjacency, ModeGraph};
use crate::pendulum::PendulumSystem;

/// Samples per segment in the emitted trajectory.
pub const TRAJECTORY_POINTS_PER_SEGMENT: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    #[serde(rename = "K_max")]
    pub k_max: usize,
    #[serde(rename = "L_max")]
    pub l_max: usize,
    pub prefix_cache_enabled: bool,
    /// Recorded with the run; the planner itself draws no random numbers.
    pub rng_seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { k_max: 10_000, l_max: 12, prefix_cache_enabled: true, rng_seed: 0 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 || self.l_max == 0 {
            return Err(Error::InvalidConfig("K_max and L_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateWalk {
    pub pi: Vec<usize>,
    pub cost: f64,
}

impl CandidateWalk {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Partial {
    cost: f64,
    pi: Vec<usize>,
    complete: bool,
}

impl Partial {
    // Order (cost, length, π, partial before complete). Every child sorts
    // strictly after its parent, so pops come out in key order.
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.pi.len().cmp(&other.pi.len()))
            .then_with(|| self.pi.cmp(&other.pi))
            .then(self.complete.cmp(&other.complete))
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Best-first enumeration of `x0 → xf` walks with at most `l_max` region
/// vertices, in nondecreasing cost.
pub struct WalkEnumerator {
    adj: Adjacency,
    l_max: usize,
    heap: BinaryHeap<Partial>,
    dead: HashSet<Vec<usize>>,
}

impl WalkEnumerator {
    pub fn new(graph: &ModeGraph, l_max: usize) -> Self {
        let adj = graph.adjacency();
        let heap = adj.start.iter().map(|&(j, c)| Partial { cost: c, pi: vec![j], complete: false }).collect();
        Self { adj, l_max, heap, dead: HashSet::new() }
    }

    /// Drops every walk that starts with `prefix`.
    pub fn discard_prefix(&mut self, prefix: Vec<usize>) {
        self.dead.insert(prefix);
    }

    /// Whether any walk within the length bound reaches the goal.
    fn goal_reachable(&self) -> bool {
        let mut seen = vec![false; self.adj.regions.len()];
        let mut frontier: Vec<usize> = self.adj.start.iter().map(|&(j, _)| j).collect();
        for _ in 0..self.l_max {
            let mut next = Vec::new();
            for i in frontier {
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                if self.adj.goal[i].is_some() {
                    return true;
                }
                next.extend(self.adj.regions[i].iter().map(|&(j, _)| j));
            }
            frontier = next;
        }
        false
    }

    fn is_dead(&self, pi: &[usize]) -> bool {
        !self.dead.is_empty() && (1..=pi.len()).any(|k| self.dead.contains(&pi[..k]))
    }
}

impl Iterator for WalkEnumerator {
    type Item = CandidateWalk;

    fn next(&mut self) -> Option<CandidateWalk> {
        while let Some(p) = self.heap.pop() {
            if self.is_dead(&p.pi) {
                continue;
            }
            if p.complete {
                return Some(CandidateWalk { pi: p.pi, cost: p.cost });
            }
            let last = *p.pi.last().expect("partial walks are nonempty");
            if let Some(c) = self.adj.goal.get(last).copied().flatten() {
                self.heap.push(Partial { cost: p.cost + c, pi: p.pi.clone(), complete: true });
            }
            if p.pi.len() < self.l_max {
                for &(j, c) in &self.adj.regions[last] {
                    let mut pi = p.pi.clone();
                    pi.push(j);
                    self.heap.push(Partial { cost: p.cost + c, pi, complete: false });
                }
            }
        }
        None
    }
}

/// Walk stream; fails with [`Error::NoPathExists`] when it would be empty.
pub fn enumerate_walks(graph: &ModeGraph, cfg: &PlannerConfig) -> Result<WalkEnumerator> {
    cfg.validate()?;
    if !graph.has_boundary() {
        return Err(Error::InvalidConfig("graph has no boundary vertices attached".into()));
    }
    let walks = WalkEnumerator::new(graph, cfg.l_max);
    if !walks.goal_reachable() {
        return Err(Error::NoPathExists);
    }
    Ok(walks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub pi: Vec<usize>,
    /// Stacked segment parameters, `n` per segment.
    pub omega: Vec<f64>,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "lT")]
    pub total_time: f64,
    pub x0: [f64; 2],
    pub xf: [f64; 2],
    pub defect: f64,
    pub boundary_residual: f64,
    pub k: usize,
    pub solve_time_ms: f64,
    pub trajectory: Trajectory,
}

impl PlanSolution {
    pub fn segment(&self, i: usize) -> DVector<f64> {
        DVector::from_row_slice(&self.omega[i * self.n..(i + 1) * self.n])
    }

    pub fn segments(&self) -> usize {
        self.pi.len()
    }
}

fn check_ids(pi: &[usize], lib: &RegionLibrary) -> Result<()> {
    match pi.iter().find(|&&i| lib.region(i).is_err()) {
        Some(&i) => Err(Error::UnknownRegionId(i)),
        None if pi.is_empty() => Err(Error::InvalidConfig("empty region sequence".into())),
        None => Ok(()),
    }
}

/// Block-diagonal region constraints and continuity for `pi`, plus `x0` and
/// optionally `xf`.
fn sequence_program(pi: &[usize], lib: &RegionLibrary, x0: [f64; 2], xf: Option<[f64; 2]>) -> Result<LinearProgram> {
    check_ids(pi, lib)?;
    let spec = lib.spec();
    let (n, l) = (spec.n, pi.len());
    let rows: usize = pi.iter().map(|&i| lib.regions[i].n_constraints()).sum();
    let mut a = DMatrix::zeros(rows, n * l);
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for (s, &i) in pi.iter().enumerate() {
        let region = &lib.regions[i];
        let q = region.n_constraints();
        a.view_mut((r, s * n), (q, n)).copy_from(region.a());
        b.rows_mut(r, q).copy_from(region.b());
        r += q;
    }
    let mut prog = LinearProgram::new(n * l);
    prog.add_inequalities(&a, &b)?;
    let stacked = spec.build_stacked(l);
    prog.add_equalities(&stacked.continuity, &DVector::zeros(stacked.continuity.nrows()))?;
    match xf {
        Some(xf) => {
            let xb = DVector::from_row_slice(&[x0[0], x0[1], xf[0], xf[1]]);
            prog.add_equalities(&stacked.boundary, &xb)?;
        }
        None => {
            let h0 = stacked.boundary.rows(0, STATE_DIM).into_owned();
            prog.add_equalities(&h0, &DVector::from_row_slice(&x0))?;
        }
    }
    Ok(prog)
}

/// Whether the regions in `prefix` can be chained starting from `x0`.
pub fn prefix_feasible(prefix: &[usize], lib: &RegionLibrary, x0: [f64; 2]) -> Result<bool> {
    Ok(lp::solve_feasibility(&sequence_program(prefix, lib, x0, None)?)?.is_feasible())
}

/// Memoized [`prefix_feasible`].
#[derive(Debug, Default)]
pub struct PrefixCache {
    known: HashMap<Vec<usize>, bool>,
    pub lp_solves: usize,
}

impl PrefixCache {
    pub fn feasible(&mut self, prefix: &[usize], lib: &RegionLibrary, x0: [f64; 2]) -> Result<bool> {
        if let Some(&f) = self.known.get(prefix) {
            return Ok(f);
        }
        let f = prefix_feasible(prefix, lib, x0)?;
        self.lp_solves += 1;
        self.known.insert(prefix.to_vec(), f);
        Ok(f)
    }

    /// Shortest prefix of `pi` that cannot be reached from `x0`, if any.
    pub fn first_dead_prefix(&mut self, pi: &[usize], lib: &RegionLibrary, x0: [f64; 2]) -> Result<Option<usize>> {
        if self.feasible(pi, lib, x0)? {
            return Ok(None);
        }
        // Invariant: prefix of length `hi` is infeasible, of length `lo` feasible.
        let (mut lo, mut hi) = (0usize, pi.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.feasible(&pi[..mid], lib, x0)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(hi))
    }
}

/// Solves the stacked program for a fixed sequence. The witness is pushed
/// toward the interior of the feasible set by maximizing the smallest
/// normalized slack, which keeps it off the region vertices.
pub fn check_admissible(
    pi: &[usize],
    lib: &RegionLibrary,
    x0: [f64; 2],
    xf: [f64; 2],
) -> Result<Option<PlanSolution>> {
    let prog = sequence_program(pi, lib, x0, Some(xf))?;
    let found = lp::solve_feasibility(&prog)?;
    if !found.is_feasible() {
        return Ok(None);
    }
    let omega = centered_witness(&prog).unwrap_or_else(|| found.witness.expect("feasible result has a witness"));
    Ok(Some(assemble(pi, omega, lib, x0, xf)))
}

fn centered_witness(prog: &LinearProgram) -> Option<DVector<f64>> {
    let (a, b) = (prog.a_ineq(), prog.b_ineq());
    let nv = prog.n_vars();
    let mut a_aug = DMatrix::zeros(a.nrows() + 1, nv + 1);
    a_aug.view_mut((0, 0), (a.nrows(), nv)).copy_from(a);
    for r in 0..a.nrows() {
        a_aug[(r, nv)] = a.row(r).norm();
    }
    a_aug[(a.nrows(), nv)] = 1.0;
    let mut b_aug = DVector::zeros(a.nrows() + 1);
    b_aug.rows_mut(0, a.nrows()).copy_from(b);
    b_aug[a.nrows()] = 1.0;
    let mut eq = DMatrix::zeros(prog.a_eq().nrows(), nv + 1);
    eq.view_mut((0, 0), (prog.a_eq().nrows(), nv)).copy_from(prog.a_eq());
    let mut centered = LinearProgram::from_parts(a_aug, b_aug, eq, prog.b_eq().clone()).ok()?;
    let mut obj = DVector::zeros(nv + 1);
    obj[nv] = 1.0;
    centered.set_objective(obj, Sense::Maximize).ok()?;
    let res = lp::solve_optimize(&centered).ok()?;
    if !res.is_feasible() {
        return None;
    }
    let w = res.witness?;
    if w[nv] < 0.0 {
        return None;
    }
    let omega = w.rows(0, nv).into_owned();
    (prog.max_violation(&omega) <= FEAS_TOL).then_some(omega)
}

fn assemble(pi: &[usize], omega: DVector<f64>, lib: &RegionLibrary, x0: [f64; 2], xf: [f64; 2]) -> PlanSolution {
    let spec = lib.spec();
    let stacked = spec.build_stacked(pi.len());
    let defect = (&stacked.continuity * &omega).abs().max();
    let xb = DVector::from_row_slice(&[x0[0], x0[1], xf[0], xf[1]]);
    let boundary_residual = (&stacked.boundary * &omega - xb).abs().max();
    let trajectory = PendulumSystem::from_config(&lib.system)
        .map(|sys| sample_trajectory(&sys, &omega, pi.len()))
        .unwrap_or(Trajectory { t: vec![], q: vec![], qdot: vec![], u: vec![] });
    PlanSolution {
        pi: pi.to_vec(),
        omega: omega.iter().copied().collect(),
        n: spec.n,
        horizon: spec.horizon,
        total_time: pi.len() as f64 * spec.horizon,
        x0,
        xf,
        defect,
        boundary_residual,
        k: 0,
        solve_time_ms: 0.0,
        trajectory,
    }
}

/// Position, velocity and torque at evenly spaced times in every segment,
/// both segment endpoints included.
pub fn sample_trajectory(sys: &PendulumSystem, omega: &DVector<f64>, segments: usize) -> Trajectory {
    let n = sys.n();
    let horizon = sys.spec.horizon;
    let mut out = Trajectory { t: vec![], q: vec![], qdot: vec![], u: vec![] };
    for s in 0..segments {
        let w = omega.rows(s * n, n).into_owned();
        for j in 0..TRAJECTORY_POINTS_PER_SEGMENT {
            let t = horizon * j as f64 / (TRAJECTORY_POINTS_PER_SEGMENT - 1) as f64;
            let [q, qdot] = sys.spec.state(&w, t).expect("t lies in [0, T]");
            out.t.push(s as f64 * horizon + t);
            out.q.push(q);
            out.qdot.push(qdot);
            out.u.push(sys.torque_at(&w, t).expect("t lies in [0, T]"));
        }
    }
    out
}

/// Pops walks in cost order and returns the first admissible one.
pub fn plan(
    lib: &RegionLibrary,
    graph: &ModeGraph,
    x0: [f64; 2],
    xf: [f64; 2],
    cfg: &PlannerConfig,
) -> Result<PlanSolution> {
    let started = Instant::now();
    let mut walks = enumerate_walks(graph, cfg)?;
    let mut cache = PrefixCache::default();
    let mut k = 0usize;
    while let Some(walk) = walks.next() {
        if k >= cfg.k_max {
            return Err(Error::BudgetExhausted(cfg.k_max));
        }
        k += 1;
        if let Some(mut sol) = check_admissible(&walk.pi, lib, x0, xf)? {
            sol.k = k;
            sol.solve_time_ms = started.elapsed().as_secs_f64() * 1e3;
            log::info!("admissible sequence {:?} after {k} candidates", sol.pi);
            return Ok(sol);
        }
        if cfg.prefix_cache_enabled {
            if let Some(len) = cache.first_dead_prefix(&walk.pi, lib, x0)? {
                walks.discard_prefix(walk.pi[..len].to_vec());
            }
        }
    }
    Err(Error::NoPathExists)
}
