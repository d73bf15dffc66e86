#![allow(dead_code)]

use nalgebra::DVector;
use polyplan_core::decomposition::{decompose, DecompositionConfig, RegionLibrary, SeedGrid};
use polyplan_core::mode_graph::{Calibration, Edge, ModeGraph, Vertex};
use polyplan_core::pendulum::{PendulumSystem, SystemConfig};
use polyplan_core::polytope::PolytopicActionSet;
use polyplan_core::rng::rng_from;
use rand::Rng;

/// Random axis-aligned boxes in the three-parameter space with a torque bound
/// loose enough that it never matters.
pub fn box_library(seed: u64, m: usize) -> RegionLibrary {
    let mut rng = rng_from(seed);
    let mut regions = Vec::new();
    let mut seeds = Vec::new();
    for id in 0..m {
        let center: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let half: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..0.6)).collect();
        let lo: Vec<f64> = center.iter().zip(&half).map(|(c, h)| c - h).collect();
        let hi: Vec<f64> = center.iter().zip(&half).map(|(c, h)| c + h).collect();
        regions.push(PolytopicActionSet::from_box(id, &lo, &hi).unwrap());
        seeds.push(center);
    }
    RegionLibrary {
        n: 3,
        system: SystemConfig::standard(3, 1.0, 100.0),
        regions,
        seeds,
        config: DecompositionConfig::default(),
    }
}

/// Small real decomposition: n = 3, coarse seed grid.
pub fn desk_library() -> RegionLibrary {
    let sys = PendulumSystem::from_config(&SystemConfig::standard(3, 0.5, 0.6)).unwrap();
    let mut cfg = DecompositionConfig::for_system(&sys);
    let rate = sys.natural_rate();
    cfg.seed_grid = SeedGrid { q0: (-1.0, 1.0), q0_count: 3, qdot0: (-rate, rate), qdot0_count: 3 };
    cfg.refine_clean_samples = 4000;
    decompose(&sys, &cfg).unwrap()
}

/// A point inside `region` sampled uniformly from its bounding box by
/// rejection (boxes are accepted on the first draw).
pub fn interior_point(region: &PolytopicActionSet, rng: &mut impl Rng) -> DVector<f64> {
    let bbox = polyplan_core::polytope::bounding_box(region.a(), region.b()).unwrap();
    loop {
        let p = DVector::from_iterator(bbox.len(), bbox.iter().map(|(lo, hi)| rng.random_range(*lo..=*hi)));
        if region.slack_min(&p) > 1e-9 {
            return p;
        }
    }
}

fn calibration() -> Calibration {
    Calibration { mu: 0.0, sigma: 1.0, l_min: 1.0, l_max: 9.0, k_max: 2.0, degenerate: false }
}

/// Full graph over `m` regions from explicit weighted edges.
pub fn graph(m: usize, start: &[(usize, f64)], inner: &[(usize, usize, f64)], goal: &[(usize, f64)]) -> ModeGraph {
    let mut vertices: Vec<Vertex> = (0..m).map(Vertex::Region).collect();
    vertices.push(Vertex::Start);
    vertices.push(Vertex::Goal);
    let mut edges = Vec::new();
    for &(j, c) in start {
        edges.push(Edge { from: Vertex::Start, to: Vertex::Region(j), cost: c, vol: 0.0 });
    }
    for &(i, j, c) in inner {
        edges.push(Edge { from: Vertex::Region(i), to: Vertex::Region(j), cost: c, vol: 1.0 });
    }
    for &(i, c) in goal {
        edges.push(Edge { from: Vertex::Region(i), to: Vertex::Goal, cost: c, vol: 0.0 });
    }
    ModeGraph { vertices, edges, calibration: calibration() }
}

/// Every `x0 → xf` walk with at most `l_max` regions, sorted by
/// (cost, length, sequence). Costs are summed in walk order.
pub fn exhaustive_walks(g: &ModeGraph, l_max: usize) -> Vec<(f64, Vec<usize>)> {
    let m = g.region_count();
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<usize>, f64)> = Vec::new();
    for j in 0..m {
        if let Some(e) = g.edge(Vertex::Start, Vertex::Region(j)) {
            stack.push((vec![j], e.cost));
        }
    }
    while let Some((pi, cost)) = stack.pop() {
        let last = *pi.last().unwrap();
        if let Some(e) = g.edge(Vertex::Region(last), Vertex::Goal) {
            out.push((cost + e.cost, pi.clone()));
        }
        if pi.len() < l_max {
            for j in 0..m {
                if let Some(e) = g.edge(Vertex::Region(last), Vertex::Region(j)) {
                    let mut next = pi.clone();
                    next.push(j);
                    stack.push((next, cost + e.cost));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.len().cmp(&b.1.len())).then_with(|| a.1.cmp(&b.1)));
    out
}
