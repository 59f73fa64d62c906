//! Brute-force check of chain equilibria.
//!
//! Each level is perturbed on a grid around the returned point while every
//! deeper level re-solves locally: the leaf exactly by coordinate descent on
//! its box, intermediate levels by a coarse-to-fine grid search.

mod common;

use common::{normal_vec, random_psd};
use nalgebra::DVector;
use qpnet::{find_equilibrium, Halfspace, NncPolyhedron, QpNetwork, QpNode, QuadCost, SearchOptions, Termination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOUND: f64 = 1.5;
const STEP: f64 = 1e-3;
const RADIUS: f64 = 0.02;

struct Chain {
    net: QpNetwork,
    blocks: Vec<Vec<usize>>,
}

fn random_chain(rng: &mut ChaCha8Rng, levels: usize) -> Chain {
    let dims: Vec<usize> = (0..levels).map(|_| rng.gen_range(1..=2)).collect();
    let n: usize = dims.iter().sum();
    let mut blocks = Vec::new();
    let mut at = 0;
    for d in &dims {
        blocks.push((at..at + d).collect::<Vec<_>>());
        at += d;
    }
    let nodes = blocks
        .iter()
        .map(|b| {
            let q = random_psd(rng, n, n, 0.2);
            let mut rows = Vec::new();
            for &j in b {
                for s in [1.0, -1.0] {
                    let mut a = vec![0.0; n];
                    a[j] = s;
                    rows.push(Halfspace::ge(a, BOUND));
                }
            }
            QpNode {
                cost: QuadCost::new(q, DVector::from_vec(normal_vec(rng, n))).unwrap(),
                feasible: NncPolyhedron::new(n, rows).unwrap(),
                decision: b.clone(),
            }
        })
        .collect();
    let edges = (1..levels).map(|l| (l - 1, l)).collect();
    Chain {
        net: QpNetwork { n, nodes, edges },
        blocks,
    }
}

/// Exact minimizer of a strictly convex cost over the leaf's box, by
/// cyclic coordinate descent.
fn leaf_response(cost: &QuadCost, block: &[usize], x: &mut [f64]) {
    for _ in 0..10_000 {
        let mut delta: f64 = 0.0;
        for &j in block {
            let g = cost.gradient(x)[j];
            let v = (x[j] - g / cost.q_mat[(j, j)]).clamp(-BOUND, BOUND);
            delta = delta.max((v - x[j]).abs());
            x[j] = v;
        }
        if delta < 1e-13 {
            return;
        }
    }
}

/// Grid points of radius `r` and spacing `h` around `centre` on `block`, clipped to the box.
fn grid(centre: &[f64], block: &[usize], r: f64, h: f64) -> Vec<Vec<f64>> {
    let k = (r / h).round() as i64;
    let mut out = vec![centre.to_vec()];
    for &j in block {
        let mut next = Vec::new();
        for p in &out {
            for s in -k..=k {
                let mut q = p.clone();
                q[j] = (centre[j] + s as f64 * h).clamp(-BOUND, BOUND);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Moves levels `level..` to local responses near their current values.
fn respond(c: &Chain, level: usize, x: &mut Vec<f64>) {
    let last = c.blocks.len() - 1;
    if level > last {
        return;
    }
    if level == last {
        leaf_response(&c.net.nodes[level].cost, &c.blocks[level], x);
        return;
    }
    let cost = &c.net.nodes[level].cost;
    respond(c, level + 1, x);
    let (mut r, mut h) = (0.1, 0.01);
    for _ in 0..4 {
        let mut best = (cost.value(x), x.clone());
        for mut y in grid(x, &c.blocks[level], r, h) {
            respond(c, level + 1, &mut y);
            let v = cost.value(&y);
            if v < best.0 {
                best = (v, y);
            }
        }
        *x = best.1;
        r = h;
        h /= 10.0;
    }
}

/// Lowest cost level `level` reaches on its grid neighbourhood.
fn best_deviation(c: &Chain, level: usize, x: &[f64]) -> f64 {
    let cost = &c.net.nodes[level].cost;
    grid(x, &c.blocks[level], RADIUS, STEP)
        .into_iter()
        .map(|mut y| {
            respond(c, level + 1, &mut y);
            cost.value(&y)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn check_chains(levels: usize, count: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solved = 0;
    for inst in 0..count {
        let c = random_chain(&mut rng, levels);
        let t = find_equilibrium(&c.net, &vec![0.0; c.net.n], &SearchOptions::default()).unwrap();
        if t.termination != Termination::Equilibrium {
            continue;
        }
        solved += 1;
        let x = t.x;
        for level in 0..levels {
            let f = c.net.nodes[level].cost.value(&x);
            let dev = best_deviation(&c, level, &x);
            assert!(
                dev >= f - STEP * (1.0 + f.abs()),
                "instance {inst}: level {level} improves from {f} to {dev} at {x:?}"
            );
        }
        let mut leaf = x.clone();
        leaf_response(&c.net.nodes[levels - 1].cost, &c.blocks[levels - 1], &mut leaf);
        for &j in &c.blocks[levels - 1] {
            assert!((leaf[j] - x[j]).abs() < 1e-6, "instance {inst}: leaf is not at its best response");
        }
    }
    assert!(solved * 10 >= count * 9, "only {solved} of {count} chains reached an equilibrium");
    format!("{solved} of {count} {levels}-level chains solved, all pass the grid check")
}

#[test]
fn two_level_chains_are_local_equilibria() {
    check_chains(2, 50, 501);
}

#[test]
fn three_level_chains_are_local_equilibria() {
    check_chains(3, 20, 502);
}

#[test]
fn oracle_rejects_a_displaced_leader() {
    let mut rng = ChaCha8Rng::seed_from_u64(503);
    let c = random_chain(&mut rng, 2);
    let t = find_equilibrium(&c.net, &vec![0.0; c.net.n], &SearchOptions::default()).unwrap();
    assert_eq!(t.termination, Termination::Equilibrium);
    let mut x = t.x;
    let j = c.blocks[0][0];
    x[j] = if x[j] > 0.0 { x[j] - 0.05 } else { x[j] + 0.05 };
    respond(&c, 1, &mut x);
    let f = c.net.nodes[0].cost.value(&x);
    assert!(best_deviation(&c, 0, &x) < f - STEP * (1.0 + f.abs()));
}
