//! Mode adjacency graph: which regions can follow which, and how attractive
//! each switch is.
//!
//! An ordered pair `(i, j)` becomes an edge when the conditioned product of
//! the two regions is nonempty. Edge costs come from the product's volume
//! through a normal fit: volumes at the mean cost `ℓ_max`, volumes `k_max`
//! standard deviations above it cost `ℓ_min`, and volumes below the mean are
//! pruned.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::decomposition::RegionLibrary;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram};
use crate::polytope::{estimate_volume, estimate_volume_with, kernel_basis, ConditionedProduct, VolumeMethod};
use crate::rng::{sub_seed, STREAM_VOLUME};

/// Graph vertex. Serialized as the bare region id, or `"x0"` / `"xf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "VertexRepr", into = "VertexRepr")]
pub enum Vertex {
    Region(usize),
    Start,
    Goal,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum VertexRepr {
    Id(usize),
    Tag(String),
}

impl TryFrom<VertexRepr> for Vertex {
    type Error = String;

    fn try_from(r: VertexRepr) -> std::result::Result<Self, String> {
        match r {
            VertexRepr::Id(i) => Ok(Vertex::Region(i)),
            VertexRepr::Tag(t) if t == "x0" => Ok(Vertex::Start),
            VertexRepr::Tag(t) if t == "xf" => Ok(Vertex::Goal),
            VertexRepr::Tag(t) => Err(format!("unknown vertex tag {t:?}")),
        }
    }
}

impl From<Vertex> for VertexRepr {
    fn from(v: Vertex) -> Self {
        match v {
            Vertex::Region(i) => VertexRepr::Id(i),
            Vertex::Start => VertexRepr::Tag("x0".into()),
            Vertex::Goal => VertexRepr::Tag("xf".into()),
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Region(i) => write!(f, "{i}"),
            Vertex::Start => f.write_str("x0"),
            Vertex::Goal => f.write_str("xf"),
        }
    }
}

/// Nonempty conditioned product before calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawEdge {
    pub from: usize,
    pub to: usize,
    pub volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: Vertex,
    pub to: Vertex,
    pub cost: f64,
    pub vol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mu: f64,
    pub sigma: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub k_max: f64,
    /// Set when every volume was equal and all costs fell back to `ℓ_min`.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub calibration: Calibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub l_min: f64,
    pub l_max: f64,
    pub k_max: f64,
    /// Samples per product volume estimate.
    pub volume_budget: usize,
    /// `None` picks rejection sampling per edge with the covariance fallback.
    pub volume_method: Option<VolumeMethod>,
    /// Drop edges below the mean volume; when off they are kept at `ℓ_max`.
    pub prune_below_mean: bool,
    pub rng_seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            l_min: 1.0,
            l_max: 9.0,
            k_max: 2.0,
            volume_budget: 2000,
            volume_method: Some(VolumeMethod::GaussianProxy),
            prune_below_mean: true,
            rng_seed: 0,
        }
    }
}

impl ModeGraph {
    pub fn region_count(&self) -> usize {
        self.vertices.iter().filter(|v| matches!(v, Vertex::Region(_))).count()
    }

    pub fn has_boundary(&self) -> bool {
        self.vertices.contains(&Vertex::Start) && self.vertices.contains(&Vertex::Goal)
    }

    pub fn edge(&self, from: Vertex, to: Vertex) -> Option<&Edge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Outgoing edges per vertex, each list sorted by target.
    pub fn adjacency(&self) -> Adjacency {
        let m = self.vertices.iter().filter_map(|v| match v {
            Vertex::Region(i) => Some(i + 1),
            _ => None,
        });
        let m = m.max().unwrap_or(0);
        let mut adj = Adjacency { start: Vec::new(), regions: vec![Vec::new(); m], goal: vec![None; m] };
        for e in &self.edges {
            match (e.from, e.to) {
                (Vertex::Start, Vertex::Region(j)) if j < m => adj.start.push((j, e.cost)),
                (Vertex::Region(i), Vertex::Region(j)) if i < m && j < m => adj.regions[i].push((j, e.cost)),
                (Vertex::Region(i), Vertex::Goal) if i < m => adj.goal[i] = Some(e.cost),
                _ => {}
            }
        }
        adj.start.sort_by_key(|&(j, _)| j);
        for list in &mut adj.regions {
            list.sort_by_key(|&(j, _)| j);
        }
        adj
    }
}

/// Successor lists keyed by region id.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    pub start: Vec<(usize, f64)>,
    pub regions: Vec<Vec<(usize, f64)>>,
    pub goal: Vec<Option<f64>>,
}

/// Examines every ordered pair (self-pairs included) and records the volume
/// of each nonempty conditioned product.
pub fn build_graph(lib: &RegionLibrary, cfg: &GraphConfig) -> Result<Vec<RawEdge>> {
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let spec = lib.spec();
    let kernel = kernel_basis(&spec.build_stacked(2).continuity)?;
    let m = lib.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let found: Vec<Result<Option<RawEdge>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let product = ConditionedProduct::with_kernel(&lib.regions[i], &lib.regions[j], &kernel)?;
            if product.is_empty()? {
                return Ok(None);
            }
            let seed = sub_seed(cfg.rng_seed, STREAM_VOLUME, (i * m + j) as u64);
            let (a, b) = (&product.lambda_a, &product.lambda_b);
            let est = match cfg.volume_method {
                Some(method) => estimate_volume_with(method, a, b, cfg.volume_budget, seed)?,
                None => estimate_volume(a, b, cfg.volume_budget, seed)?,
            };
            Ok(Some(RawEdge { from: i, to: j, volume: est.value }))
        })
        .collect();
    let mut edges = Vec::new();
    for e in found {
        edges.extend(e?);
    }
    log::info!("{} of {} ordered pairs compose", edges.len(), m * m);
    Ok(edges)
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn fit_normal(volumes: &[f64]) -> (f64, f64) {
    let n = volumes.len() as f64;
    let mu = volumes.iter().sum::<f64>() / n;
    if volumes.len() < 2 {
        return (mu, 0.0);
    }
    let var = volumes.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, var.sqrt())
}

/// Linear volume-to-cost map, clamped below at `ℓ_min`.
pub fn edge_cost(volume: f64, cal: &Calibration) -> f64 {
    if cal.degenerate {
        return cal.l_min;
    }
    let cost = cal.l_max + (volume - cal.mu) * (cal.l_min - cal.l_max) / (cal.k_max * cal.sigma);
    cost.clamp(cal.l_min, cal.l_max)
}

/// Fits the volume distribution and turns raw edges into a costed graph over
/// region vertices `0..region_count`.
pub fn calibrate_costs(
    edges: &[RawEdge],
    region_count: usize,
    l_min: f64,
    l_max: f64,
    k_max: f64,
    prune_below_mean: bool,
) -> Result<ModeGraph> {
    if edges.len() < 2 {
        return Err(Error::TooFewEdges { needed: 2, found: edges.len() });
    }
    if !(l_min >= 0.0 && l_min <= l_max && l_max.is_finite()) {
        return Err(Error::InvalidConfig(format!("need 0 <= ℓ_min <= ℓ_max, got {l_min} and {l_max}")));
    }
    if !(k_max > 0.0) {
        return Err(Error::InvalidConfig(format!("k_max must be positive, got {k_max}")));
    }
    if let Some(e) = edges.iter().find(|e| e.from >= region_count || e.to >= region_count) {
        return Err(Error::UnknownRegionId(e.from.max(e.to)));
    }
    let volumes: Vec<f64> = edges.iter().map(|e| e.volume).collect();
    let (mu, sigma) = fit_normal(&volumes);
    let degenerate = !(sigma > 0.0);
    if degenerate {
        log::warn!("{}; all edge costs set to ℓ_min", Error::DegenerateCalibration);
    }
    let calibration = Calibration { mu, sigma, l_min, l_max, k_max, degenerate };
    let mut out = Vec::with_capacity(edges.len());
    for e in edges {
        let below = e.volume < mu && !degenerate;
        if below && prune_below_mean {
            continue;
        }
        let cost = if below { l_max } else { edge_cost(e.volume, &calibration) };
        out.push(Edge { from: Vertex::Region(e.from), to: Vertex::Region(e.to), cost, vol: e.volume });
    }
    Ok(ModeGraph { vertices: (0..region_count).map(Vertex::Region).collect(), edges: out, calibration })
}

/// Whether some trajectory in `region` is at `state` at time `t`.
pub fn state_reachable(
    region: &crate::polytope::PolytopicActionSet,
    spec: &BasisSpec,
    t: f64,
    state: [f64; 2],
) -> Result<bool> {
    let mut prog = LinearProgram::new(spec.n);
    prog.add_inequalities(region.a(), region.b())?;
    prog.add_equalities(&spec.eval_h(t)?, &DVector::from_row_slice(&state))?;
    Ok(lp::solve_feasibility(&prog)?.is_feasible())
}

/// Adds `x0` and `xf` with edges to every region whose initial (final) state
/// set contains the boundary state. Any existing boundary edges are replaced.
pub fn attach_boundary(graph: &ModeGraph, x0: [f64; 2], xf: [f64; 2], lib: &RegionLibrary) -> Result<ModeGraph> {
    let spec = lib.spec();
    let l_min = graph.calibration.l_min;
    let flags: Vec<Result<(bool, bool)>> = lib
        .regions
        .par_iter()
        .map(|r| Ok((state_reachable(r, &spec, 0.0, x0)?, state_reachable(r, &spec, spec.horizon, xf)?)))
        .collect();
    let mut start = Vec::new();
    let mut goal = Vec::new();
    for (j, f) in flags.into_iter().enumerate() {
        let (s, g) = f?;
        if s {
            start.push(Edge { from: Vertex::Start, to: Vertex::Region(j), cost: l_min, vol: 0.0 });
        }
        if g {
            goal.push(Edge { from: Vertex::Region(j), to: Vertex::Goal, cost: l_min, vol: 0.0 });
        }
    }
    if start.is_empty() {
        return Err(Error::NoStartEdges);
    }
    if goal.is_empty() {
        return Err(Error::NoGoalEdges);
    }
    let mut vertices: Vec<Vertex> = graph.vertices.iter().copied().filter(|v| matches!(v, Vertex::Region(_))).collect();
    vertices.push(Vertex::Start);
    vertices.push(Vertex::Goal);
    let mut edges = start;
    edges.extend(graph.edges.iter().filter(|e| matches!((e.from, e.to), (Vertex::Region(_), Vertex::Region(_)))).cloned());
    edges.extend(goal);
    Ok(ModeGraph { vertices, edges, calibration: graph.calibration.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(vols: &[f64]) -> Vec<RawEdge> {
        vols.iter().enumerate().map(|(k, &v)| RawEdge { from: k % 3, to: k / 3, volume: v }).collect()
    }

    #[test]
    fn endpoint_mapping() {
        let cal = Calibration { mu: 2.5, sigma: 0.75, l_min: 1.0, l_max: 9.0, k_max: 2.0, degenerate: false };
        assert_eq!(edge_cost(2.5, &cal), 9.0);
        assert_eq!(edge_cost(2.5 + 2.0 * 0.75, &cal), 1.0);
        assert_eq!(edge_cost(2.5 + 0.75, &cal), 5.0);
        assert_eq!(edge_cost(100.0, &cal), 1.0);
    }

    #[test]
    fn pruning_and_retention_at_mean() {
        // Mean 2, so the 1.0 edge goes and the 2.0 edge stays at ℓ_max.
        let g = calibrate_costs(&raw(&[1.0, 2.0, 3.0]), 3, 1.0, 9.0, 2.0, true).unwrap();
        assert_eq!(g.edges.len(), 2);
        assert_eq!(g.edges[0].cost, 9.0);
        assert_eq!(g.edges[0].vol, 2.0);
        let kept = calibrate_costs(&raw(&[1.0, 2.0, 3.0]), 3, 1.0, 9.0, 2.0, false).unwrap();
        assert_eq!(kept.edges.len(), 3);
        assert_eq!(kept.edges[0].cost, 9.0);
    }

    #[test]
    fn uniform_costs() {
        let g = calibrate_costs(&raw(&[1.0, 2.0, 3.0, 7.0]), 3, 1.0, 1.0, 2.0, true).unwrap();
        assert!(g.edges.iter().all(|e| e.cost == 1.0));
    }

    #[test]
    fn degenerate_volumes() {
        let g = calibrate_costs(&raw(&[4.0, 4.0, 4.0]), 3, 1.0, 9.0, 2.0, true).unwrap();
        assert!(g.calibration.degenerate);
        assert_eq!(g.edges.len(), 3);
        assert!(g.edges.iter().all(|e| e.cost == 1.0));
    }

    #[test]
    fn calibration_errors() {
        assert!(matches!(
            calibrate_costs(&raw(&[1.0]), 3, 1.0, 9.0, 2.0, true),
            Err(Error::TooFewEdges { needed: 2, found: 1 })
        ));
        assert!(calibrate_costs(&raw(&[1.0, 2.0]), 3, 9.0, 1.0, 2.0, true).is_err());
        assert!(calibrate_costs(&raw(&[1.0, 2.0]), 3, 1.0, 9.0, 0.0, true).is_err());
    }

    #[test]
    fn sample_statistics() {
        let (mu, sigma) = fit_normal(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mu, 2.5);
        assert!((sigma - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn vertex_json() {
        let vs = vec![Vertex::Region(3), Vertex::Start, Vertex::Goal];
        let text = serde_json::to_string(&vs).unwrap();
        assert_eq!(text, r#"[3,"x0","xf"]"#);
        let back: Vec<Vertex> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vs);
        assert!(serde_json::from_str::<Vertex>(r#""x1""#).is_err());
    }
}
