mod common;

use common::{random_bounded, random_cost, unit_ball};
use qpnet::polyhedra::vertex_enumerate;
use qpnet::qp_kernel::solve_qp;
use qpnet::solution_graph::check_qp_solution;
use qpnet::{NncPolyhedron, QpCheck, QpStatus, QuadCost, RowKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 500;
const SAMPLE: usize = 10_000;
const TOL: f64 = 1e-7;

/// Stationarity, sign and complementarity violation of a multiplier vector.
fn kkt_residual(cost: &QuadCost, c: &NncPolyhedron, free: &[usize], x: &[f64], lambda: &[f64]) -> f64 {
    let g = cost.gradient(x);
    let mut worst: f64 = 0.0;
    for &j in free {
        let s: f64 = c.rows.iter().zip(lambda).map(|(r, l)| l * r.normal[j]).sum();
        worst = worst.max((g[j] - s).abs());
    }
    for (r, &l) in c.rows.iter().zip(lambda) {
        if r.kind != RowKind::Equality {
            worst = worst.max(-l).max((l * r.value(x)).abs());
        }
    }
    worst
}

/// Whether some point of a local sample around `x` is feasible with lower cost.
fn sampled_descent(cost: &QuadCost, c: &NncPolyhedron, free: &[usize], x: &[f64], rng: &mut ChaCha8Rng) -> bool {
    let f0 = cost.value(x);
    let radii = [1e-2, 1e-3, 1e-4];
    (0..SAMPLE).any(|k| {
        let u = unit_ball(rng, free.len());
        let mut y = x.to_vec();
        for (d, &j) in free.iter().enumerate() {
            y[j] += radii[k % radii.len()] * u[d];
        }
        c.closure_contains(&y, 1e-12) && cost.value(&y) < f0 - 1e-13
    })
}

/// Candidate points: the constrained optimum, a vertex, an edge point and an interior point.
fn candidates(c: &NncPolyhedron, cost: &QuadCost, free: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let v = vertex_enumerate(c).unwrap();
    let n = c.dim;
    let pick = |rng: &mut ChaCha8Rng| v.vertices.choose(rng).unwrap().clone();
    let mix = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { (0..n).map(|j| (1.0 - t) * a[j] + t * b[j]).collect() };
    let base = pick(rng);
    let mut out = vec![base.clone()];
    let other = pick(rng);
    out.push(mix(&base, &other, rng.gen_range(0.1..0.9)));
    let centre: Vec<f64> = (0..n)
        .map(|j| v.vertices.iter().map(|p| p[j]).sum::<f64>() / v.vertices.len() as f64)
        .collect();
    out.push(mix(&centre, &base, rng.gen_range(0.0..0.5)));
    let r = solve_qp(cost, c, free, &centre, 1e-9).unwrap();
    assert_eq!(r.status, QpStatus::Optimal);
    out.push(r.x_star);
    out
}

#[test]
fn certificates_are_sound_on_random_qps() {
    run_kkt_suite();
}

pub fn run_kkt_suite() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let (mut optimal, mut not_optimal) = (0, 0);
    let mut solver_optima_certified = 0;
    for inst in 0..INSTANCES {
        let n = rng.gen_range(1..=4);
        let extra = rng.gen_range(0..=4);
        let bound = rng.gen_range(0.5..2.0);
        let c = random_bounded(&mut rng, n, extra, bound);
        let ridge = if rng.gen_bool(0.5) { 0.0 } else { 0.1 };
        let cost = random_cost(&mut rng, n, ridge);
        let mut free: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        if free.is_empty() {
            free.push(rng.gen_range(0..n));
        }
        let pts = candidates(&c, &cost, &free, &mut rng);
        for (k, x) in pts.iter().enumerate() {
            match check_qp_solution(&cost, &c, &free, x, TOL).unwrap() {
                QpCheck::Optimal { lambda } => {
                    optimal += 1;
                    if k == pts.len() - 1 {
                        solver_optima_certified += 1;
                    }
                    let res = kkt_residual(&cost, &c, &free, x, &lambda);
                    let g = cost.gradient(x).amax();
                    assert!(res <= 1e-6 * (1.0 + g), "instance {inst}: KKT residual {res:e}");
                }
                QpCheck::NotOptimal { .. } => {
                    not_optimal += 1;
                    assert!(
                        sampled_descent(&cost, &c, &free, x, &mut rng),
                        "instance {inst}: rejected point {x:?} has no sampled descent"
                    );
                }
                QpCheck::NotFeasible => panic!("instance {inst}: candidate {x:?} reported infeasible"),
            }
        }
    }
    assert_eq!(solver_optima_certified, INSTANCES);
    assert!(optimal > INSTANCES && not_optimal > INSTANCES, "{optimal} / {not_optimal}");
    format!("{INSTANCES} QPs: {optimal} points certified optimal, {not_optimal} rejected with a sampled descent")
}
