use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use polyplan_bench::{random_lp, small_library};
use polyplan_core::lp::{chebyshev_center, solve_feasibility};
use polyplan_core::mode_graph::{attach_boundary, build_graph, calibrate_costs, GraphConfig};
use polyplan_core::planner::{enumerate_walks, plan, PlannerConfig};
use polyplan_core::polytope::{box_constraints, HitAndRun};
use polyplan_core::rng::rng_from;

fn lp(c: &mut Criterion) {
    let prog = random_lp(12, 60, 1);
    c.bench_function("lp_feasibility_12x60", |b| b.iter(|| solve_feasibility(black_box(&prog)).unwrap()));
    c.bench_function("chebyshev_12x60", |b| {
        b.iter(|| chebyshev_center(black_box(prog.a_ineq()), black_box(prog.b_ineq())).unwrap())
    });
}

fn hit_and_run(c: &mut Criterion) {
    let (a, b) = box_constraints(&[0.0; 6], &[1.0; 6]).unwrap();
    c.bench_function("hit_and_run_1000_steps_6d", |bch| {
        bch.iter(|| {
            let mut chain = HitAndRun::new(&a, &b, DVector::from_element(6, 0.5), rng_from(3));
            for _ in 0..1000 {
                black_box(chain.step());
            }
        })
    });
}

fn search(c: &mut Criterion) {
    let lib = small_library();
    let cfg = GraphConfig::default();
    c.bench_function("build_graph_small", |b| b.iter(|| build_graph(black_box(&lib), &cfg).unwrap()));
    let raw = build_graph(&lib, &cfg).unwrap();
    let g = calibrate_costs(&raw, lib.len(), cfg.l_min, cfg.l_max, cfg.k_max, cfg.prune_below_mean).unwrap();
    let full = attach_boundary(&g, [0.0, 0.0], [0.0, 0.0], &lib).unwrap();
    let pcfg = PlannerConfig { l_max: 6, ..PlannerConfig::default() };
    c.bench_function("enumerate_1000_walks", |b| {
        b.iter(|| enumerate_walks(black_box(&full), &pcfg).unwrap().take(1000).count())
    });
    c.bench_function("plan_rest_to_rest", |b| {
        b.iter(|| plan(&lib, black_box(&full), [0.0, 0.0], [0.0, 0.0], &pcfg).unwrap())
    });
}

criterion_group!(benches, lp, hit_and_run, search);
criterion_main!(benches);
