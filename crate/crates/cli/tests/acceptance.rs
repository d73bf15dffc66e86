//! Acceptance suite: one PASS/FAIL line per criterion, then the per-run
//! data behind the directional criteria. Exits nonzero if any criterion
//! outside `KNOWN_RED` fails; known failures still print FAIL.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use polyplan_cli::*;
use polyplan_core::decomposition::RegionLibrary;
use polyplan_core::lp::{solve_feasibility, LinearProgram, LpStatus};
use polyplan_core::mode_graph::*;
use polyplan_core::pendulum::{PendulumSystem, SystemConfig};
use polyplan_core::planner::{enumerate_walks, plan, PlannerConfig};
use polyplan_core::polytope::{box_constraints, estimate_volume, PolytopicActionSet};
use polyplan_core::rng::rng_from;
use polyplan_core::Error;
use rand::Rng;

const SEEDS: u64 = 5;
const SWING_UP: ([f64; 2], [f64; 2]) = ([0.0, 0.0], [PI, 0.0]);

/// The eight indexed systems as (n, T, u_max).
const SYSTEMS: [(usize, f64, f64); 8] = [
    (5, 0.5, 0.5),
    (5, 0.5, 0.6),
    (5, 1.0, 0.5),
    (5, 1.0, 0.6),
    (6, 0.5, 0.5),
    (6, 0.5, 0.6),
    (6, 1.0, 0.5),
    (6, 1.0, 0.6),
];

/// Criteria that fail on this implementation; the README explains why.
const KNOWN_RED: &[usize] = &[3];

#[derive(Default)]
struct Report {
    failed: usize,
    unexpected: usize,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, detail: String) {
        let known = KNOWN_RED.contains(&id);
        let status = match (pass, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as known red)",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {status}: {detail}");
        if !pass {
            self.failed += 1;
            self.unexpected += usize::from(!known);
        }
    }
}

fn system_file(index: usize) -> SystemFile {
    let (n, t, u) = SYSTEMS[index - 1];
    SystemFile { system: SystemConfig::standard(n, t, u), decomposition: None }
}

#[derive(Clone, Debug)]
enum Outcome {
    Solved { k: usize, lt: f64, pi: Vec<usize> },
    Exhausted(usize),
    Failed(String),
}

impl Outcome {
    /// Candidates checked; a run that ran out of budget counts as the budget.
    fn k(&self, k_max: usize) -> usize {
        match self {
            Outcome::Solved { k, .. } => *k,
            Outcome::Exhausted(k) => *k,
            Outcome::Failed(_) => k_max,
        }
    }
}

fn swing_up(lib: &RegionLibrary, raw: &[RawEdge], l_max: f64, cfg: &PlannerConfig) -> Outcome {
    let g = GraphConfig { l_max, ..GraphConfig::default() };
    let graph = match calibrate_costs(raw, lib.len(), g.l_min, g.l_max, g.k_max, g.prune_below_mean)
        .and_then(|g| attach_boundary(&g, SWING_UP.0, SWING_UP.1, lib))
    {
        Ok(g) => g,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    match plan(lib, &graph, SWING_UP.0, SWING_UP.1, cfg) {
        Ok(sol) => Outcome::Solved { k: sol.k, lt: sol.total_time, pi: sol.pi },
        Err(Error::BudgetExhausted(k)) => Outcome::Exhausted(k),
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

struct Run {
    lib: RegionLibrary,
    raw: Vec<RawEdge>,
    worst_audit: f64,
    mean_audit: f64,
    l9: Outcome,
}

fn criterion_1(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("system8.json");
    let (lib, graph, sol) = (dir.path().join("lib.json"), dir.path().join("graph.json"), dir.path().join("sol.json"));
    write_json(&config, &system_file(8)).unwrap();
    let started = Instant::now();
    let result = cmd_decompose(&config, &lib, Some(0))
        .and_then(|_| cmd_graph(&lib, 9.0, &graph, 0))
        .and_then(|_| cmd_plan(&graph, &lib, SWING_UP.0, SWING_UP.1, &sol, &PlannerConfig::default()));
    let wall = started.elapsed().as_secs_f64();
    match result {
        Ok(s) => {
            let report = cmd_validate(&sol, &config, Some(&lib)).unwrap();
            let torque = report.checks.iter().find(|c| c.name == "torque").unwrap().value;
            let pass = report.passed()
                && report.checks.iter().all(|c| c.passed == Some(true))
                && s.boundary_residual <= 1e-6
                && s.defect <= 1e-6
                && (2.0..=6.0).contains(&s.total_time)
                && wall <= 60.0;
            r.line(
                1,
                pass,
                format!(
                    "pi {:?}, k {}, lT {} s, boundary residual {:.1e}, defect {:.1e}, max |u| - u_max {:.3e}, pipeline wall {:.1} s",
                    s.pi, s.k, s.total_time, s.boundary_residual, s.defect, torque, wall
                ),
            );
        }
        Err(e) => r.line(1, false, format!("pipeline failed after {wall:.1} s: {e}")),
    }
}

fn pipelines() -> BTreeMap<(usize, u64), Run> {
    let mut runs = BTreeMap::new();
    for s in 1..=SYSTEMS.len() {
        for seed in 0..SEEDS {
            let started = Instant::now();
            let (lib, report) = run_decompose(&system_file(s), Some(seed)).expect("decomposition");
            let raw = build_graph(&lib, &GraphConfig { rng_seed: seed, ..GraphConfig::default() }).expect("graph");
            let l9 = swing_up(&lib, &raw, 9.0, &PlannerConfig::default());
            eprintln!(
                "system {s} seed {seed}: {} regions, {} edges, {:?}, {:.1} s",
                lib.len(),
                raw.len(),
                l9,
                started.elapsed().as_secs_f64()
            );
            runs.insert(
                (s, seed),
                Run { lib, raw, worst_audit: report.worst_region_rate, mean_audit: 1.0 - report.audit_pass_rate, l9 },
            );
        }
    }
    runs
}

fn criterion_2(r: &mut Report, runs: &BTreeMap<(usize, u64), Run>) {
    let k_max = PlannerConfig::default().k_max;
    let mut holds = 0;
    let mut pairs = Vec::new();
    for seed in 0..SEEDS {
        let run = &runs[&(1, seed)];
        let k1 = swing_up(&run.lib, &run.raw, 1.0, &PlannerConfig::default()).k(k_max);
        let k9 = run.l9.k(k_max);
        holds += usize::from(k1 >= k9);
        pairs.push(format!("({k1}, {k9})"));
    }
    r.line(2, holds >= 4, format!("k(l_max = 1) >= k(l_max = 9) in {holds}/5 seeds; (k1, k9) per seed: {}", pairs.join(" ")));
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn criterion_3(r: &mut Report, runs: &BTreeMap<(usize, u64), Run>) {
    let k_max = PlannerConfig::default().k_max;
    let (mut compared, mut held) = (0, 0);
    for (short, long) in [(1, 3), (2, 4), (5, 7), (6, 8)] {
        for seed in 0..SEEDS {
            if let (Outcome::Solved { lt: a, .. }, Outcome::Solved { lt: b, .. }) = (&runs[&(short, seed)].l9, &runs[&(long, seed)].l9) {
                compared += 1;
                held += usize::from(a <= b);
            }
        }
    }
    let mut medians = Vec::new();
    let mut k_ok = true;
    for five in 1..=4 {
        let six = five + 4;
        let m5 = median((0..SEEDS).map(|s| runs[&(five, s)].l9.k(k_max)).collect());
        let m6 = median((0..SEEDS).map(|s| runs[&(six, s)].l9.k(k_max)).collect());
        k_ok &= m6 <= m5;
        medians.push(format!("W{five} {m5} vs W{six} {m6}"));
    }
    let lt_ok = compared > 0 && held == compared;
    r.line(
        3,
        lt_ok && k_ok,
        format!(
            "(a) lT(T = 0.5) <= lT(T = 1) in {held}/{compared} solved pairs [{}]; (b) median k n = 5 vs n = 6: {} [{}]",
            if lt_ok { "pass" } else { "fail" },
            medians.join(", "),
            if k_ok { "pass" } else { "fail" }
        ),
    );
}

fn criterion_4(r: &mut Report) {
    let raw: Vec<RawEdge> =
        [1.0, 2.0, 3.0, 4.5, 0.5].iter().enumerate().map(|(i, &v)| RawEdge { from: i, to: i, volume: v }).collect();
    let g = calibrate_costs(&raw, 5, 1.0, 9.0, 2.0, true).unwrap();
    let c = g.calibration.clone();
    let (mu, sigma) = fit_normal(&[1.0, 2.0, 3.0, 4.5, 0.5]);
    let at_mean = edge_cost(c.mu, &c);
    let at_top = edge_cost(c.mu + c.k_max * c.sigma, &c);
    let cal = Calibration { mu: 2.0, sigma: 0.5, l_min: 1.0, l_max: 300.0, k_max: 2.0, degenerate: false };
    // mu + k_max sigma is itself rounded, so the top endpoint may land a few
    // ulps of l_max away from l_min.
    let ulps = |x: f64, want: f64, scale: f64| (x - want).abs() / (f64::EPSILON * scale);
    let top_ulps = ulps(at_top, 1.0, 9.0);
    let pass = c.mu == mu
        && c.sigma == sigma
        && at_mean == 9.0
        && top_ulps <= 4.0
        && edge_cost(2.0, &cal) == 300.0
        && edge_cost(3.0, &cal) == 1.0;
    r.line(
        4,
        pass,
        format!("Vol = mu -> {at_mean}, Vol = mu + k_max sigma -> {at_top} ({top_ulps:.1} ulps of l_max); l_max 300 case exact"),
    );
}

/// Exact feasibility by Fourier-Motzkin elimination over integers.
fn fourier_motzkin(mut rows: Vec<(Vec<i128>, i128)>, n: usize) -> bool {
    for var in 0..n {
        let (mut pos, mut neg, mut rest) = (vec![], vec![], vec![]);
        for row in rows {
            match row.0[var].signum() {
                1 => pos.push(row),
                -1 => neg.push(row),
                _ => rest.push(row),
            }
        }
        for (pa, pb) in &pos {
            for (na, nb) in &neg {
                let (s, t) = (-na[var], pa[var]);
                let coeffs: Vec<i128> = pa.iter().zip(na).map(|(p, q)| s * p + t * q).collect();
                let rhs = s * pb + t * nb;
                let g = coeffs.iter().chain([&rhs]).fold(0i128, |g, &v| gcd(g, v.abs())).max(1);
                rest.push((coeffs.iter().map(|c| c / g).collect(), rhs / g));
            }
        }
        rows = rest;
    }
    rows.iter().all(|(_, rhs)| *rhs >= 0)
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn criterion_5(r: &mut Report) {
    let mut rng = rng_from(5);
    let (mut agree, mut feasible) = (0, 0);
    for _ in 0..500 {
        let n = rng.random_range(1..=3usize);
        let row = |rng: &mut rand_chacha::ChaCha8Rng| -> (Vec<i64>, i64) {
            ((0..n).map(|_| rng.random_range(-4..=4)).collect(), rng.random_range(-6..=6))
        };
        let ineq: Vec<_> = (0..rng.random_range(0..=6)).map(|_| row(&mut rng)).collect();
        let eq: Vec<_> = (0..rng.random_range(0..=2)).map(|_| row(&mut rng)).collect();
        let mat = |rows: &[(Vec<i64>, i64)]| DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j] as f64);
        let vec = |rows: &[(Vec<i64>, i64)]| DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1 as f64));
        let lp = LinearProgram::from_parts(mat(&ineq), vec(&ineq), mat(&eq), vec(&eq)).unwrap();
        let got = solve_feasibility(&lp).unwrap().status == LpStatus::Feasible;
        let mut exact: Vec<(Vec<i128>, i128)> = Vec::new();
        for (a, b) in &ineq {
            exact.push((a.iter().map(|&v| v as i128).collect(), *b as i128));
        }
        for (a, b) in &eq {
            exact.push((a.iter().map(|&v| v as i128).collect(), *b as i128));
            exact.push((a.iter().map(|&v| -(v as i128)).collect(), -(*b as i128)));
        }
        let want = fourier_motzkin(exact, n);
        agree += usize::from(got == want);
        feasible += usize::from(want);
    }
    r.line(5, agree == 500, format!("{agree}/500 statuses agree with exact elimination ({feasible} feasible)"));
}

fn criterion_6(r: &mut Report, runs: &BTreeMap<(usize, u64), Run>) {
    let (mut agree, mut total, mut edges) = (0, 0, 0);
    for s in 1..=SYSTEMS.len() {
        let run = &runs[&(s, 0)];
        let (lib, raw) = (&run.lib, &run.raw);
        let spec = lib.spec();
        let n = spec.n;
        let hc = spec.build_stacked(2).continuity;
        for i in 0..lib.len() {
            for j in 0..lib.len() {
                let (ri, rj) = (&lib.regions[i], &lib.regions[j]);
                let (qi, qj) = (ri.n_constraints(), rj.n_constraints());
                let mut a = DMatrix::zeros(qi + qj, 2 * n);
                a.view_mut((0, 0), (qi, n)).copy_from(ri.a());
                a.view_mut((qi, n), (qj, n)).copy_from(rj.a());
                let b = DVector::from_iterator(qi + qj, ri.b().iter().chain(rj.b().iter()).copied());
                let mut prog = LinearProgram::new(2 * n);
                prog.add_inequalities(&a, &b).unwrap();
                prog.add_equalities(&hc, &DVector::zeros(hc.nrows())).unwrap();
                let direct = solve_feasibility(&prog).unwrap().is_feasible();
                let edge = raw.iter().any(|e| e.from == i && e.to == j);
                agree += usize::from(direct == edge);
                total += 1;
                edges += usize::from(edge);
            }
        }
    }
    r.line(6, agree == total, format!("{agree}/{total} ordered pairs agree over the eight seed-0 libraries ({edges} edges)"));
}

fn criterion_7(r: &mut Report) {
    let (a, b) = box_constraints(&[0.0; 4], &[1.0; 4]).unwrap();
    let cube = estimate_volume(&a, &b, 100_000, 7).unwrap().value;
    let simplex = PolytopicActionSet::new(
        0,
        DMatrix::from_row_slice(4, 3, &[-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 1.0, 1.0]),
        DVector::from_row_slice(&[0.0, 0.0, 0.0, 1.0]),
    )
    .unwrap();
    let tri = estimate_volume(simplex.a(), simplex.b(), 100_000, 7).unwrap().value;
    let (e_cube, e_tri) = ((cube - 1.0).abs(), (tri * 6.0 - 1.0).abs());
    r.line(
        7,
        e_cube <= 0.10 && e_tri <= 0.15,
        format!("4-cube {cube:.4} (error {:.2}%), 3-simplex {tri:.5} (error {:.2}%)", 100.0 * e_cube, 100.0 * e_tri),
    );
}

fn criterion_8(r: &mut Report, runs: &BTreeMap<(usize, u64), Run>) {
    let worst = runs.values().map(|run| run.worst_audit).fold(0.0, f64::max);
    let regions: usize = runs.values().map(|run| run.lib.len()).sum();
    let mean = runs.values().map(|run| run.mean_audit * run.lib.len() as f64).sum::<f64>() / regions as f64;
    r.line(
        8,
        worst <= AUDIT_MAX_RATE,
        format!("{regions} regions over {} libraries, overall violation rate {mean:.2e}, worst region {worst:.2e}", runs.len()),
    );
}

fn criterion_9(r: &mut Report) {
    let mut rng = rng_from(9);
    let (mut probes, mut worst) = (0, 0.0f64);
    let systems: Vec<PendulumSystem> = SYSTEMS
        .iter()
        .chain(&[(3, 0.5, 0.6)])
        .map(|&(n, t, u)| PendulumSystem::from_config(&SystemConfig::standard(n, t, u)).unwrap())
        .collect();
    while probes < 1000 {
        let sys = &systems[rng.random_range(0..systems.len())];
        let n = sys.n();
        let w = DVector::from_fn(n, |_, _| rng.random_range(-4.0..4.0));
        let u = sys.check_torques(&w);
        let k = rng.random_range(0..u.len());
        if u[k].abs() <= 1e-3 {
            continue;
        }
        let grad = sys.violation_gradient(&w, k).unwrap();
        let h = 1e-6;
        let fd = DVector::from_fn(n, |i, _| {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[i] += h;
            minus[i] -= h;
            (sys.check_torques(&plus)[k].abs() - sys.check_torques(&minus)[k].abs()) / (2.0 * h)
        });
        worst = worst.max((&grad - &fd).norm() / grad.norm().max(1e-12));
        probes += 1;
    }
    r.line(9, worst <= 1e-4, format!("max relative error {worst:.2e} over {probes} probes"));
}

fn random_graph(rng: &mut rand_chacha::ChaCha8Rng) -> ModeGraph {
    let m = rng.random_range(1..=4usize);
    let density = rng.random_range(0.2..0.9);
    let cost = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<f64> {
        rng.random_bool(density).then(|| f64::from(rng.random_range(1..=4u8)) * 0.5)
    };
    let mut vertices: Vec<Vertex> = (0..m).map(Vertex::Region).collect();
    vertices.extend([Vertex::Start, Vertex::Goal]);
    let mut edges = Vec::new();
    for j in 0..m {
        if let Some(c) = cost(rng) {
            edges.push(Edge { from: Vertex::Start, to: Vertex::Region(j), cost: c, vol: 0.0 });
        }
        if let Some(c) = cost(rng) {
            edges.push(Edge { from: Vertex::Region(j), to: Vertex::Goal, cost: c, vol: 0.0 });
        }
        for i in 0..m {
            if let Some(c) = cost(rng) {
                edges.push(Edge { from: Vertex::Region(i), to: Vertex::Region(j), cost: c, vol: 1.0 });
            }
        }
    }
    let calibration = Calibration { mu: 0.0, sigma: 1.0, l_min: 1.0, l_max: 9.0, k_max: 2.0, degenerate: false };
    ModeGraph { vertices, edges, calibration }
}

fn all_walks(g: &ModeGraph, l_max: usize) -> Vec<(f64, Vec<usize>)> {
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<usize>, f64)> = (0..g.region_count())
        .filter_map(|j| g.edge(Vertex::Start, Vertex::Region(j)).map(|e| (vec![j], e.cost)))
        .collect();
    while let Some((pi, cost)) = stack.pop() {
        let last = *pi.last().unwrap();
        if let Some(e) = g.edge(Vertex::Region(last), Vertex::Goal) {
            out.push((cost + e.cost, pi.clone()));
        }
        if pi.len() < l_max {
            for j in 0..g.region_count() {
                if let Some(e) = g.edge(Vertex::Region(last), Vertex::Region(j)) {
                    stack.push(([pi.clone(), vec![j]].concat(), cost + e.cost));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.len().cmp(&b.1.len())).then_with(|| a.1.cmp(&b.1)));
    out
}

fn criterion_10(r: &mut Report) {
    let mut rng = rng_from(10);
    let (mut matched, mut total, mut walks) = (0, 0, 0);
    for _ in 0..300 {
        let g = random_graph(&mut rng);
        let l_max = rng.random_range(1..=6usize);
        let want = all_walks(&g, l_max);
        let cfg = PlannerConfig { l_max, ..PlannerConfig::default() };
        let got: Vec<(f64, Vec<usize>)> = match enumerate_walks(&g, &cfg) {
            Ok(it) => it.map(|w| (w.cost, w.pi)).collect(),
            Err(Error::NoPathExists) => vec![],
            Err(e) => panic!("{e}"),
        };
        let monotone = got.windows(2).all(|w| w[0].0 <= w[1].0);
        matched += usize::from(monotone && got == want);
        total += 1;
        walks += want.len();
    }
    r.line(10, matched == total, format!("{matched}/{total} random graphs match exhaustive enumeration ({walks} walks)"));
}

fn criterion_11(r: &mut Report, runs: &BTreeMap<(usize, u64), Run>) {
    let on = PlannerConfig::default();
    let off = PlannerConfig { prefix_cache_enabled: false, ..on.clone() };
    let (mut same, mut total, mut saved) = (0, 0, 0i64);
    for ((_, _), run) in runs.iter().take(20) {
        let a = &run.l9;
        let b = swing_up(&run.lib, &run.raw, 9.0, &off);
        let agree = match (a, &b) {
            (Outcome::Solved { pi: pa, k: ka, .. }, Outcome::Solved { pi: pb, k: kb, .. }) => {
                saved += *kb as i64 - *ka as i64;
                pa == pb
            }
            (Outcome::Failed(x), Outcome::Failed(y)) => x == y,
            (Outcome::Exhausted(_), Outcome::Exhausted(_)) => true,
            _ => false,
        };
        same += usize::from(agree);
        total += 1;
    }
    r.line(11, same == total && total == 20, format!("{same}/{total} instances return the same sequence; cache saved {saved} solves in total"));
}

fn main() {
    let mut r = Report::default();
    let started = Instant::now();
    criterion_1(&mut r);
    let runs = pipelines();
    criterion_2(&mut r, &runs);
    criterion_3(&mut r, &runs);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r, &runs);
    criterion_7(&mut r);
    criterion_8(&mut r, &runs);
    criterion_9(&mut r);
    criterion_10(&mut r);
    criterion_11(&mut r, &runs);

    println!("\nsystem seed regions edges outcome(l_max = 9)");
    for ((s, seed), run) in &runs {
        println!("W{s} {seed} {} {} {:?}", run.lib.len(), run.raw.len(), run.l9);
    }
    println!(
        "\n{} of 11 criteria passed, {} known failure(s), {:.0} s",
        11 - r.failed,
        r.failed - r.unexpected,
        started.elapsed().as_secs_f64()
    );
    if r.unexpected > 0 {
        std::process::exit(1);
    }
}
