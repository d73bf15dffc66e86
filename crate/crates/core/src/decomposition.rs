//! Region growth: inner polytopic approximations of the torque-feasible
//! parameter set, grown around free-fall seeds.
//!
//! Counterexamples are searched for on spheres of expanding radius around the
//! seed. Each violating sample is bisected back toward the seed to a level
//! set slightly inside the torque bound, and the tangent halfspace of the
//! violated constraint there is added as a cut. Once the sphere schedule is
//! exhausted, points inside the polytope (vertex probes and hit-and-run
//! samples) are checked the same way until a long run comes back clean.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, Sense};
use crate::pendulum::{PendulumSystem, SeedFit, SystemConfig};
use crate::polytope::{HitAndRun, PolytopicActionSet};
use crate::rng::{rng_from, sub_seed, STREAM_GROW};

/// Regions whose Chebyshev radius falls below this are discarded.
pub const MIN_REGION_RADIUS: f64 = 1e-4;
const BISECTION_TOL: f64 = 1e-6;
/// Independent hit-and-run chains per refinement pass.
const REFINE_CHAINS: usize = 32;
/// Random vertex directions probed per parameter dimension in each pass.
const VERTEX_PROBES_PER_DIM: usize = 16;
const VERTEX_PROBE_FRACTIONS: [f64; 6] = [1.0, 0.95, 0.9, 0.8, 0.7, 0.6];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub q0: (f64, f64),
    pub q0_count: usize,
    pub qdot0: (f64, f64),
    pub qdot0_count: usize,
}

impl SeedGrid {
    /// Single seed at `(q0, qdot0)`.
    pub fn single(q0: f64, qdot0: f64) -> Self {
        Self { q0: (q0, q0), q0_count: 1, qdot0: (qdot0, qdot0), qdot0_count: 1 }
    }

    /// Seeds in grid order: `q0` outer, `qdot0` inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let axis = |(lo, hi): (f64, f64), count: usize| -> Vec<f64> {
            match count {
                0 => vec![],
                1 => vec![lo],
                _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
            }
        };
        let qs = axis(self.q0, self.q0_count);
        let qds = axis(self.qdot0, self.qdot0_count);
        qs.iter().flat_map(|&q| qds.iter().map(move |&qd| (q, qd))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    /// `q0 ∈ [-2π, 2π]`, velocity control values within `±3 sqrt(g/l)`.
    pub fn default_for(sys: &PendulumSystem) -> Self {
        let n = sys.n();
        let v = 3.0 * sys.natural_rate();
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut lo = vec![-v; n];
        let mut hi = vec![v; n];
        lo[0] = -two_pi;
        hi[0] = two_pi;
        Self { lo, hi }
    }

    pub fn contains(&self, omega: &DVector<f64>) -> bool {
        omega.iter().zip(self.lo.iter().zip(self.hi.iter())).all(|(w, (lo, hi))| *w >= *lo && *w <= *hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompositionConfig {
    pub seed_grid: SeedGrid,
    /// Points drawn per sphere pass.
    pub sphere_samples: usize,
    pub initial_radius: f64,
    pub growth: f64,
    pub max_radius: f64,
    /// Resolved from the system when absent.
    pub param_box: Option<ParamBox>,
    /// Cut budget for the sphere phase.
    pub max_cuts: usize,
    /// Additional cut budget for the interior sampling phase.
    pub refine_cuts: usize,
    /// Consecutive clean interior samples that end refinement.
    pub refine_clean_samples: usize,
    /// Cuts are tangent to the level set `|u| = (1 - cut_margin) u_max`.
    pub cut_margin: f64,
    pub rng_seed: u64,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        let rate = 9.81f64.sqrt();
        let pi = std::f64::consts::PI;
        Self {
            seed_grid: SeedGrid { q0: (-pi, pi), q0_count: 9, qdot0: (-2.0 * rate, 2.0 * rate), qdot0_count: 9 },
            sphere_samples: 0,
            initial_radius: 0.05,
            growth: 1.5,
            max_radius: 8.0,
            param_box: None,
            max_cuts: 80,
            refine_cuts: 400,
            refine_clean_samples: 32000,
            cut_margin: 0.1,
            rng_seed: 0,
        }
    }
}

impl DecompositionConfig {
    /// Seed grid velocities scaled to the system's natural rate.
    pub fn for_system(sys: &PendulumSystem) -> Self {
        let rate = sys.natural_rate();
        let mut cfg = Self::default();
        cfg.seed_grid.qdot0 = (-2.0 * rate, 2.0 * rate);
        cfg
    }

    pub fn sphere_samples_for(&self, n: usize) -> usize {
        if self.sphere_samples == 0 {
            20 * n
        } else {
            self.sphere_samples
        }
    }

    pub fn param_box_for(&self, sys: &PendulumSystem) -> ParamBox {
        self.param_box.clone().unwrap_or_else(|| ParamBox::default_for(sys))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.sphere_samples_for(n) < 2 * n {
            return Err(Error::InvalidConfig(format!("sphere_samples must be at least 2n = {}", 2 * n)));
        }
        if !(self.growth > 1.0) {
            return Err(Error::InvalidConfig(format!("growth factor {} must exceed 1", self.growth)));
        }
        if !(self.initial_radius > 0.0 && self.max_radius >= self.initial_radius) {
            return Err(Error::InvalidConfig("radius schedule must satisfy 0 < ρ0 <= ρ_max".into()));
        }
        if let Some(pb) = &self.param_box {
            if pb.lo.len() != n || pb.hi.len() != n {
                return Err(Error::InvalidConfig(format!("param_box must have {n} coordinates")));
            }
            if pb.lo.iter().zip(&pb.hi).any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
                return Err(Error::InvalidConfig("param_box must be bounded with lo < hi".into()));
            }
        }
        Ok(())
    }
}

/// Action sets for one system together with the seeds that grew them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionLibrary {
    pub n: usize,
    pub system: SystemConfig,
    pub regions: Vec<PolytopicActionSet>,
    pub seeds: Vec<Vec<f64>>,
    pub config: DecompositionConfig,
}

impl RegionLibrary {
    pub fn spec(&self) -> BasisSpec {
        BasisSpec { n: self.system.n, horizon: self.system.horizon }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn region(&self, id: usize) -> Result<&PolytopicActionSet> {
        self.regions.get(id).filter(|r| r.id() == id).ok_or(Error::UnknownRegionId(id))
    }
}

/// Grows one region around a feasible seed.
pub fn grow_region(
    sys: &PendulumSystem,
    seed: &DVector<f64>,
    cfg: &DecompositionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PolytopicActionSet> {
    let n = sys.n();
    sys.spec.check_len(seed)?;
    cfg.validate(n)?;
    let (_, seed_excess) = sys.max_violation(seed);
    if seed_excess > 0.0 {
        return Err(Error::InfeasibleSeed(seed_excess));
    }
    let pbox = cfg.param_box_for(sys);
    if !pbox.contains(seed) {
        return Err(Error::InvalidConfig("seed lies outside the parameter box".into()));
    }
    let mut region = PolytopicActionSet::from_box(0, &pbox.lo, &pbox.hi)?;
    let samples = cfg.sphere_samples_for(n);
    let mut cuts = 0usize;
    let mut rho = cfg.initial_radius;

    'radius: while rho <= cfg.max_radius && cuts < cfg.max_cuts {
        let mut found = false;
        for _ in 0..samples {
            let dir = random_direction(n, rng);
            let point = seed + dir * rho;
            if region.slack_min(&point) < 0.0 {
                continue;
            }
            if sys.max_violation(&point).1 <= 0.0 {
                continue;
            }
            found = true;
            add_cut(sys, &mut region, seed, &point, cfg.cut_margin)?;
            cuts += 1;
            if cuts >= cfg.max_cuts {
                break 'radius;
            }
        }
        if !found {
            rho *= cfg.growth;
        }
    }

    refine(sys, &mut region, seed, cfg, rng)?;
    Ok(region)
}

/// Interior counterexample search. Each pass probes segments toward random
/// vertices, then runs hit-and-run chains; the first violator found is cut
/// and the pass restarts. Ends after a pass with `refine_clean_samples`
/// feasible chain samples.
fn refine(
    sys: &PendulumSystem,
    region: &mut PolytopicActionSet,
    seed: &DVector<f64>,
    cfg: &DecompositionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n = sys.n();
    let per_chain = (cfg.refine_clean_samples / REFINE_CHAINS).max(1);
    let mut cuts = 0usize;
    // After a cut the first chain restarts next to it, since violators cluster.
    let mut hot: Option<DVector<f64>> = None;
    while cuts < cfg.refine_cuts {
        let (center, _) = region.chebyshev()?;
        let (a, b) = (region.a().clone(), region.b().clone());
        let mut violator = None;
        // Violators sit in the far tips of elongated regions, which chains
        // from the center rarely reach. Probe toward random vertices first.
        'sweep: for _ in 0..VERTEX_PROBES_PER_DIM * n {
            let Some(vertex) = extreme_point(&a, &b, &random_direction(n, rng))? else { continue };
            for f in VERTEX_PROBE_FRACTIONS {
                let p = &center + (&vertex - &center) * f;
                if sys.max_violation(&p).1 > 0.0 {
                    violator = Some(p);
                    break 'sweep;
                }
            }
        }
        if violator.is_none() {
            'chains: for c in 0..REFINE_CHAINS {
                let start = match (c, hot.take()) {
                    (0, Some(p)) => p,
                    _ if c % 4 != 0 => near_vertex(&a, &b, &center, rng)?,
                    _ => center.clone(),
                };
                let mut chain = HitAndRun::new(&a, &b, start, rng_from(rng.random::<u64>()));
                for _ in 0..10 * n {
                    chain.step();
                }
                for _ in 0..per_chain {
                    for _ in 0..2 * n {
                        chain.step();
                    }
                    if sys.max_violation(chain.current()).1 > 0.0 {
                        violator = Some(chain.current().clone());
                        break 'chains;
                    }
                }
            }
        }
        let Some(violator) = violator else { return Ok(()) };
        add_cut(sys, region, seed, &violator, cfg.cut_margin)?;
        cuts += 1;
        let near = &center + (&violator - &center) * 0.9;
        if region.slack_min(&near) > 0.0 {
            hot = Some(near);
        }
    }
    log::debug!("region refinement stopped at the cut budget of {}", cfg.refine_cuts);
    Ok(())
}

/// Vertex of `{A x <= b}` maximizing `dir`, if the program is bounded.
fn extreme_point(a: &DMatrix<f64>, b: &DVector<f64>, dir: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let mut prog = LinearProgram::from_parts(a.clone(), b.clone(), DMatrix::zeros(0, dir.len()), DVector::zeros(0))?;
    prog.set_objective(dir.clone(), Sense::Maximize)?;
    let res = lp::solve_optimize(&prog)?;
    Ok(if res.is_feasible() { res.witness } else { None })
}

/// A point between `center` and the vertex maximizing a random direction.
fn near_vertex(a: &DMatrix<f64>, b: &DVector<f64>, center: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let Some(vertex) = extreme_point(a, b, &random_direction(center.len(), rng))? else {
        return Ok(center.clone());
    };
    let point = center + (vertex - center) * rng.random_range(0.8..0.99);
    let slack = b - a * &point;
    Ok(if slack.min() > 0.0 { point } else { center.clone() })
}

fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Bisects the segment `seed -> violator` to the torque boundary and adds the
/// tangent halfspace there. Returns the boundary point.
fn add_cut(
    sys: &PendulumSystem,
    region: &mut PolytopicActionSet,
    seed: &DVector<f64>,
    violator: &DVector<f64>,
    margin: f64,
) -> Result<DVector<f64>> {
    // Seed's own excess bounds how deep the cut may sit without excluding it.
    let target = (-margin * sys.u_max).max(0.5 * sys.max_violation(seed).1);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let at = |t: f64| seed + (violator - seed) * t;
    let mut k_violated = sys.max_violation(violator).0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let (k, excess) = sys.max_violation(&at(mid));
        if excess > target {
            hi = mid;
            k_violated = k;
            if excess - target < BISECTION_TOL {
                break;
            }
        } else {
            lo = mid;
            if target - excess < BISECTION_TOL {
                break;
            }
        }
    }
    let boundary = at(lo);
    let ray = violator - seed;
    let normal = match sys.violation_gradient(&boundary, k_violated) {
        Ok(g) if g.dot(&(seed - &boundary)) < 0.0 && g.dot(&(violator - &boundary)) > 0.0 => g,
        // Tangent plane would cut off the seed or keep the violator.
        _ => ray.clone(),
    };
    let scale = normal.norm();
    let normal = normal / scale;
    let offset = normal.dot(&boundary);
    region.push_halfspace(&normal, offset)?;
    Ok(boundary)
}

/// Fits every grid seed and keeps regions in grid order, skipping seeds
/// already covered by a kept region. Growth runs in parallel over batches of
/// uncovered seeds; a batch member covered by an earlier member's region is
/// discarded, so the library matches a serial pass.
pub fn decompose(sys: &PendulumSystem, cfg: &DecompositionConfig) -> Result<RegionLibrary> {
    cfg.validate(sys.n())?;
    let pbox = cfg.param_box_for(sys);
    let fitted: Vec<(usize, DVector<f64>)> = cfg
        .seed_grid
        .points()
        .par_iter()
        .enumerate()
        .filter_map(|(index, &(q0, qd0))| match sys.fit_free_fall(q0, qd0) {
            SeedFit::Accepted(w) if pbox.contains(&w) => Some((index, w)),
            _ => None,
        })
        .collect();
    if fitted.is_empty() {
        return Err(Error::NoSeedsAccepted);
    }
    let batch = rayon::current_num_threads().max(1);
    let mut regions: Vec<PolytopicActionSet> = Vec::new();
    let mut seeds = Vec::new();
    let covered = |regions: &[PolytopicActionSet], w: &DVector<f64>| regions.iter().any(|r| r.slack_min(w) >= 0.0);
    let mut next = 0;
    while next < fitted.len() {
        let mut todo = Vec::with_capacity(batch);
        while next < fitted.len() && todo.len() < batch {
            if !covered(&regions, &fitted[next].1) {
                todo.push(&fitted[next]);
            }
            next += 1;
        }
        let grown: Vec<Result<PolytopicActionSet>> = todo
            .par_iter()
            .map(|(index, w)| {
                let mut rng = rng_from(sub_seed(cfg.rng_seed, STREAM_GROW, *index as u64));
                grow_region(sys, w, cfg, &mut rng)
            })
            .collect();
        for ((_, w), region) in todo.into_iter().zip(grown) {
            let region = region?;
            if covered(&regions, w) {
                continue;
            }
            let (_, radius) = region.chebyshev()?;
            if radius < MIN_REGION_RADIUS {
                continue;
            }
            regions.push(region.with_id(regions.len()));
            seeds.push(w.iter().copied().collect());
        }
    }
    log::info!("decomposition kept {} regions from {} accepted seeds", regions.len(), fitted.len());
    Ok(RegionLibrary { n: sys.n(), system: sys.config(), regions, seeds, config: cfg.clone() })
}

/// Fraction of hit-and-run samples (from the Chebyshev center) whose torque
/// excess exceeds `tol`.
pub fn audit_region(
    sys: &PendulumSystem,
    region: &PolytopicActionSet,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    let (center, _) = region.chebyshev()?;
    let mut chain = HitAndRun::new(region.a(), region.b(), center, rng_from(seed));
    let n = region.dim();
    let draws = chain.samples(samples, 20 * n, n);
    let bad = draws.iter().filter(|w| sys.max_violation(w).1 > tol).count();
    Ok(bad as f64 / samples.max(1) as f64)
}
