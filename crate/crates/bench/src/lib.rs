//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use polyplan_core::decomposition::{decompose, DecompositionConfig, RegionLibrary, SeedGrid};
use polyplan_core::lp::LinearProgram;
use polyplan_core::pendulum::{PendulumSystem, SystemConfig};
use polyplan_core::rng::rng_from;
use rand::Rng;

/// A small library: three basis functions, a 3 x 3 seed grid.
pub fn small_library() -> RegionLibrary {
    let sys = PendulumSystem::from_config(&SystemConfig::standard(3, 0.5, 0.6)).unwrap();
    let mut cfg = DecompositionConfig::for_system(&sys);
    let rate = sys.natural_rate();
    cfg.seed_grid = SeedGrid { q0: (-1.0, 1.0), q0_count: 3, qdot0: (-rate, rate), qdot0_count: 3 };
    cfg.refine_clean_samples = 4000;
    decompose(&sys, &cfg).unwrap()
}

/// A bounded random feasibility program around the origin.
pub fn random_lp(n: usize, rows: usize, seed: u64) -> LinearProgram {
    let mut rng = rng_from(seed);
    let a = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(rows, |_, _| rng.random_range(0.1..1.0));
    let mut lp = LinearProgram::new(n);
    lp.add_inequalities(&a, &b).unwrap();
    lp
}
