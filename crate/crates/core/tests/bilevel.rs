use qpnet::experiments::build_bilevel_example;
use qpnet::polyhedra::vertex_enumerate;
use qpnet::solution_graph::{check_qp_solution, local_node_graph};
use qpnet::{find_equilibrium, verify_equilibrium, Action, Halfspace, LocalGraph, NncPolyhedron, QpCheck, SearchOptions, Termination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Local graphs of both nodes at `x`, children first.
fn graphs_at(x: &[f64]) -> (LocalGraph, LocalGraph) {
    let net = build_bilevel_example();
    let g2 = local_node_graph(&net, 1, x, &[3], &[], 1e-9).unwrap();
    let g1 = local_node_graph(&net, 0, x, &[2, 3], &[&g2], 1e-9).unwrap();
    (g1, g2)
}

/// Random points of `piece ∩ [-1, 1]⁴` drawn as interior convex combinations of its vertices.
fn sample_piece(piece: &NncPolyhedron, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    let mut boxed = piece.closure();
    for j in 0..4 {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; 4];
            a[j] = -s;
            boxed.rows.push(Halfspace::ge(a, 1.0));
        }
    }
    let v = vertex_enumerate(&boxed).unwrap();
    assert!(v.rays.is_empty());
    (0..count)
        .map(|_| {
            let w: Vec<f64> = v.vertices.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            let mut p = vec![0.0; 4];
            for (wk, vk) in w.iter().zip(&v.vertices) {
                for j in 0..4 {
                    p[j] += wk / total * vk[j];
                }
            }
            p
        })
        .collect()
}

type Member = fn(&[f64], f64) -> bool;

fn node2_pieces() -> Vec<(Member, fn(&mut ChaCha8Rng) -> Vec<f64>)> {
    vec![
        (
            |x, t| x[3].abs() <= t && x[2] <= t,
            |r| vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..0.0), 0.0],
        ),
        (
            |x, t| (x[3] - x[2]).abs() <= t && x[2] >= -t,
            |r| {
                let s = r.gen_range(0.0..1.0);
                vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), s, s]
            },
        ),
    ]
}

fn node1_pieces() -> Vec<(Member, fn(&mut ChaCha8Rng) -> Vec<f64>)> {
    vec![
        (
            |x, t| (x[2] - x[0]).abs() <= t && x[3].abs() <= t && x[0] < t,
            |r| {
                let a = r.gen_range(-1.0..0.0);
                vec![a, r.gen_range(-1.0..1.0), a, 0.0]
            },
        ),
        (
            |x, t| {
                let m = 0.5 * (x[0] + x[1]);
                (x[2] - m).abs() <= t && (x[3] - m).abs() <= t && x[0] + x[1] > -t
            },
            |r| {
                let a: f64 = r.gen_range(-1.0..1.0);
                let b: f64 = r.gen_range((-a).max(-1.0)..1.0);
                let m = 0.5 * (a + b);
                vec![a, b, m, m]
            },
        ),
        (
            |x, t| x[2].abs() <= t && x[3].abs() <= t && x[0] >= -t && x[0] + x[1] <= t,
            |r| {
                let a = r.gen_range(0.0..1.0);
                vec![a, r.gen_range(-1.0..-a), 0.0, 0.0]
            },
        ),
    ]
}

/// Two-sided containment between a computed local graph and analytic pieces.
fn assert_same_set(g: &LocalGraph, analytic: &[(Member, fn(&mut ChaCha8Rng) -> Vec<f64>)], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-6;
    for (_, draw) in analytic {
        for _ in 0..200 {
            let p = draw(&mut rng);
            assert!(g.pieces.contains(&p, tol).unwrap(), "analytic point {p:?} missing from graph");
        }
    }
    for piece in &g.pieces.pieces {
        for p in sample_piece(piece, &mut rng, 200) {
            assert!(
                analytic.iter().any(|(m, _)| m(&p, tol)),
                "graph point {p:?} outside the analytic pieces"
            );
        }
    }
}

#[test]
fn trace_from_ridge_start() {
    let net = build_bilevel_example();
    let t = find_equilibrium(&net, &[0.0, 0.0, -3.0, 4.0], &SearchOptions::default()).unwrap();
    assert_eq!(t.termination, Termination::Equilibrium);
    let it = t.nash_iterates();
    assert_eq!(it.len(), 3);
    assert!(close(&it[1], &[0.0, 0.0, -3.0, 0.0], TOL));
    assert!(close(&t.x, &[0.0, 0.0, 0.0, 0.0], TOL));
    assert!(verify_equilibrium(&net, &t.x, 1e-6).unwrap().ok);
}

#[test]
fn follower_gradient_and_multiplier() {
    let net = build_bilevel_example();
    let nd = &net.nodes[1];
    let start = [0.0, 0.0, -3.0, 4.0];
    assert!((nd.cost.gradient(&start)[3] - 7.0).abs() < TOL);
    assert!(matches!(
        check_qp_solution(&nd.cost, &nd.feasible, &[3], &start, 1e-9).unwrap(),
        QpCheck::NotOptimal { .. }
    ));
    let mid = [0.0, 0.0, -3.0, 0.0];
    let QpCheck::Optimal { lambda } = check_qp_solution(&nd.cost, &nd.feasible, &[3], &mid, 1e-9).unwrap() else {
        panic!("follower not optimal at the intermediate iterate");
    };
    // Stationarity x₄ − x₃ = λ at x₄ = 0, x₃ = −3.
    assert!((lambda[0] - 3.0).abs() < TOL);
}

#[test]
fn follower_graph_at_intermediate_iterate_is_one_piece() {
    let net = build_bilevel_example();
    let g2 = local_node_graph(&net, 1, &[0.0, 0.0, -3.0, 0.0], &[3], &[], 1e-9).unwrap();
    assert_eq!(g2.pieces.pieces.len(), 1);
    let p = &g2.pieces.pieces[0];
    assert!(p.contains(&[0.3, -0.2, -1.0, 0.0], 1e-9).unwrap());
    assert!(!p.contains(&[0.0, 0.0, 1.0, 0.0], 1e-9).unwrap());
}

#[test]
fn local_graphs_at_origin_match_analytic_pieces() {
    let (g1, g2) = graphs_at(&[0.0; 4]);
    assert_eq!(g2.pieces.pieces.len(), 2);
    assert_same_set(&g2, &node2_pieces(), 11);
    assert_same_set(&g1, &node1_pieces(), 12);
}

#[test]
fn restart_at_equilibrium_takes_no_nash_step() {
    let net = build_bilevel_example();
    let t = find_equilibrium(&net, &[0.0; 4], &SearchOptions::default()).unwrap();
    assert_eq!(t.termination, Termination::Equilibrium);
    assert!(t.events.iter().all(|e| e.action != Action::NashSolved));
}

#[test]
fn other_parameters_move_the_equilibrium() {
    let net = build_bilevel_example();
    // With x₁ + x₂ > 0 and x₁ < 0 both leader pieces compete; the search
    // must land on one of them.
    let t = find_equilibrium(&net, &[-1.0, 3.0, 0.0, 0.0], &SearchOptions::default()).unwrap();
    assert_eq!(t.termination, Termination::Equilibrium);
    let x = &t.x;
    let on_first = close(x, &[-1.0, 3.0, -1.0, 0.0], 1e-7);
    let on_second = close(x, &[-1.0, 3.0, 1.0, 1.0], 1e-7);
    assert!(on_first || on_second, "unexpected equilibrium {x:?}");
    assert!(verify_equilibrium(&net, x, 1e-6).unwrap().ok);
}
