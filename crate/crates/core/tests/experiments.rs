mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use qpnet::experiments::avoidance::AvoidanceLayout;
use qpnet::experiments::constellation::{sample_instance_stream, RAW_EDGE_SUBSETS};
use qpnet::experiments::{
    build_avoidance_qpn, enumerate_configs, run_constellation_study, sample_instance, AvoidanceInstance,
};
use qpnet::{find_equilibrium, verify_equilibrium, Action, NetworkWarning, SearchOptions, Termination};

/// Independent count: DFS cycle test, path-based redundancy and an
/// explicit orbit under relabelling of the three peers.
#[test]
fn configuration_classes_by_brute_force() {
    let all: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    assert_eq!(1usize << all.len(), RAW_EDGE_SUBSETS);

    fn path(edges: &[(usize, usize)], from: usize, to: usize, skip: Option<usize>) -> bool {
        let mut stack = vec![from];
        let mut seen = [false; 4];
        while let Some(v) = stack.pop() {
            for (k, &(a, b)) in edges.iter().enumerate() {
                if a == v && Some(k) != skip && !seen[b] {
                    if b == to {
                        return true;
                    }
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        false
    }
    let perms = [[1, 2, 3], [1, 3, 2], [2, 1, 3], [2, 3, 1], [3, 1, 2], [3, 2, 1]];
    let mut classes: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
    let mut admissible = 0;
    for mask in 0..RAW_EDGE_SUBSETS {
        let e: Vec<(usize, usize)> = (0..12).filter(|b| mask >> b & 1 == 1).map(|b| all[b]).collect();
        if (0..4).any(|v| path(&e, v, v, None)) {
            continue;
        }
        if (0..e.len()).any(|k| path(&e, e[k].0, e[k].1, Some(k))) {
            continue;
        }
        admissible += 1;
        let orbit_min = perms
            .iter()
            .map(|p| {
                let m = |v: usize| if v == 0 { 0 } else { p[v - 1] };
                let mut s: Vec<(usize, usize)> = e.iter().map(|&(a, b)| (m(a), m(b))).collect();
                s.sort_unstable();
                s
            })
            .min()
            .unwrap();
        classes.insert(orbit_min);
    }
    assert!(admissible > 47);
    assert_eq!(classes.len(), 47);
    let ours: BTreeSet<Vec<(usize, usize)>> = enumerate_configs().into_iter().map(|c| c.edges).collect();
    assert_eq!(ours, classes);
}

#[test]
fn configurations_pass_the_network_validator() {
    let inst = sample_instance(5);
    for c in enumerate_configs() {
        let rep = inst.network(&c).validate();
        assert!(rep.is_ok(), "config {}: {:?}", c.id, rep.errors);
        assert!(
            !rep.warnings.iter().any(|w| matches!(w, NetworkWarning::RedundantEdge(..))),
            "config {} has a redundant edge",
            c.id
        );
    }
}

#[test]
fn configurations_have_reference_ids_and_labels() {
    let c = enumerate_configs();
    assert_eq!(c[0].to_string(), "{}");
    let chain = c.iter().find(|c| c.edges == vec![(0, 1), (1, 2), (2, 3)]).unwrap();
    assert_eq!(chain.id, 22);
    assert_eq!(chain.to_string(), "{(1,2) (2,3) (3,4)}");
    let star = c.iter().find(|c| c.edges == vec![(0, 1), (0, 2), (0, 3)]).unwrap();
    assert_eq!(star.id, 17);
}

#[test]
fn sampled_entries_are_standard_normal() {
    let mut v = Vec::with_capacity(100_008);
    let mut k = 0;
    while v.len() < 100_000 {
        let inst = sample_instance_stream(99, k);
        k += 1;
        v.extend(inst.g.iter().flatten());
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    v.extend(inst.r[i][j]);
                }
            }
        }
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() <= 3.0 / n.sqrt(), "mean {mean}");
    assert!((0.97..=1.03).contains(&var), "variance {var}");
}

#[test]
fn small_study_is_deterministic_and_anchored() {
    let configs = enumerate_configs();
    let opts = SearchOptions::default();
    let a = run_constellation_study(12, 3, &configs, 2, &opts);
    let b = run_constellation_study(12, 3, &configs, 1, &opts);
    assert_eq!(a, b);
    assert_eq!(a.stats.len(), 47);
    assert_eq!(a.used + a.dropped, 12);
    let base = &a.stats[0];
    assert_eq!(base.config_id, 1);
    assert_eq!(base.mean_reduction_pct, 0.0);
    assert_eq!(base.se_pct, 0.0);
    for s in &a.stats {
        assert_eq!(s.samples, a.used);
        assert!((s.ci95_pct - 1.96 * s.se_pct).abs() < 1e-12);
    }
}

#[test]
fn avoidance_equilibrium_is_safe_and_moves_right() {
    let inst = AvoidanceInstance::planar_two_obstacles();
    let net = build_avoidance_qpn(&inst).unwrap();
    let lay = AvoidanceLayout::new(2);
    let start = Instant::now();
    let t = find_equilibrium(&net, &inst.initial_point(), &SearchOptions::default()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 30.0);
    assert_eq!(t.termination, Termination::Equilibrium, "{:?}", t.message);
    for &e in &lay.eps {
        assert!(t.x[e] >= -1e-6, "expansion {} negative", t.x[e]);
    }
    assert!(t.x[lay.u_e] > 0.0);
    for k in 0..2 {
        assert!(t.x[lay.u_o[k]].abs() <= 1.0 + 1e-9 && t.x[lay.u_o[k] + 1].abs() <= 1.0 + 1e-9);
    }
    for (j, v) in inst.initial_point().iter().enumerate() {
        if net.parameter_indices().contains(&j) {
            assert_eq!(t.x[j], *v);
        }
    }
    assert!(verify_equilibrium(&net, &t.x, 1e-6).unwrap().ok);
    let again = find_equilibrium(&net, &t.x, &SearchOptions::default()).unwrap();
    assert_eq!(again.termination, Termination::Equilibrium);
    assert!(again.events.iter().all(|e| e.action != Action::NashSolved));
}
