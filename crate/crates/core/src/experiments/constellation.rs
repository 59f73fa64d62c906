//! Four-node constellation game: configurations, sampling, and the study.
//!
//! Instances are drawn with `ChaCha8Rng` seeded from the study seed; instance
//! `k` reads stream `k` of that generator, so every instance is reproducible
//! independently of how the work is split across threads.

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::stats::mean_se;
use super::CostBuilder;
use crate::equilibrium_search::{find_equilibrium, SearchOptions, Termination};
use crate::network::{QpNetwork, QpNode};
use crate::polyhedra::{Halfspace, NncPolyhedron};

pub const NODES: usize = 4;
pub const DIM: usize = 8;
pub const BOX: f64 = 5.0;
/// Number of edge subsets of the complete directed graph on four nodes.
pub const RAW_EDGE_SUBSETS: usize = 1 << 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationInstance {
    pub g: [[f64; 2]; NODES],
    /// `r[i][j]` for `i != j`; the diagonal is unused and zero.
    pub r: [[[f64; 2]; NODES]; NODES],
}

/// An edge set over nodes `0..4`, canonical under relabelling of nodes 1..3.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NetworkConfig {
    pub id: usize,
    pub edges: Vec<(usize, usize)>,
}

impl fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .edges
            .iter()
            .map(|(a, b)| format!("({},{})", a + 1, b + 1))
            .collect();
        write!(f, "{{{}}}", parts.join(" "))
    }
}

fn super_edges() -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(12);
    for i in 0..NODES {
        for j in 0..NODES {
            if i != j {
                e.push((i, j));
            }
        }
    }
    e
}

fn reach(edges: &[(usize, usize)]) -> [[bool; NODES]; NODES] {
    let mut r = [[false; NODES]; NODES];
    for &(a, b) in edges {
        r[a][b] = true;
    }
    for k in 0..NODES {
        for i in 0..NODES {
            for j in 0..NODES {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

pub fn is_acyclic(edges: &[(usize, usize)]) -> bool {
    let r = reach(edges);
    (0..NODES).all(|i| !r[i][i])
}

/// An edge is redundant when dropping it leaves reachability unchanged.
pub fn has_redundant_edge(edges: &[(usize, usize)]) -> bool {
    let full = reach(edges);
    (0..edges.len()).any(|k| {
        let rest: Vec<(usize, usize)> = edges
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, e)| *e)
            .collect();
        reach(&rest) == full
    })
}

/// Lexicographically smallest sorted edge list over permutations of nodes 1..3.
pub fn canonical_edges(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    const PERMS: [[usize; 3]; 6] = [
        [1, 2, 3],
        [1, 3, 2],
        [2, 1, 3],
        [2, 3, 1],
        [3, 1, 2],
        [3, 2, 1],
    ];
    PERMS
        .iter()
        .map(|p| {
            let map = |v: usize| if v == 0 { 0 } else { p[v - 1] };
            let mut e: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (map(a), map(b))).collect();
            e.sort_unstable();
            e
        })
        .min()
        .expect("non-empty permutation set")
}

/// Reference labelling of the configuration classes, one-based node indices.
/// Entry `k` is configuration `k + 1`.
pub const REFERENCE_LABELS: [&[(usize, usize)]; 47] = [
    &[],
    &[(1, 2)],
    &[(2, 3)],
    &[(2, 1)],
    &[(1, 2), (1, 3)],
    &[(1, 2), (2, 3)],
    &[(1, 2), (3, 1)],
    &[(1, 2), (3, 2)],
    &[(1, 2), (3, 4)],
    &[(2, 3), (2, 4)],
    &[(2, 1), (2, 3)],
    &[(2, 3), (3, 1)],
    &[(2, 3), (3, 4)],
    &[(2, 3), (4, 1)],
    &[(2, 3), (4, 3)],
    &[(2, 1), (3, 1)],
    &[(1, 2), (1, 3), (1, 4)],
    &[(1, 2), (1, 3), (2, 4)],
    &[(1, 2), (1, 3), (4, 1)],
    &[(1, 2), (1, 3), (4, 2)],
    &[(1, 2), (2, 3), (2, 4)],
    &[(1, 2), (2, 3), (3, 4)],
    &[(1, 2), (2, 3), (4, 1)],
    &[(1, 2), (2, 3), (4, 2)],
    &[(1, 2), (2, 3), (4, 3)],
    &[(1, 2), (3, 1), (3, 4)],
    &[(1, 2), (3, 1), (4, 1)],
    &[(1, 2), (3, 1), (4, 2)],
    &[(1, 2), (3, 1), (4, 3)],
    &[(1, 2), (3, 2), (3, 4)],
    &[(1, 2), (3, 2), (4, 2)],
    &[(1, 2), (3, 2), (4, 3)],
    &[(2, 1), (2, 3), (2, 4)],
    &[(2, 3), (2, 4), (3, 1)],
    &[(2, 1), (2, 3), (3, 4)],
    &[(2, 1), (2, 3), (4, 1)],
    &[(2, 1), (2, 3), (4, 2)],
    &[(2, 1), (2, 3), (4, 3)],
    &[(2, 3), (3, 1), (4, 1)],
    &[(2, 3), (3, 1), (4, 2)],
    &[(2, 3), (3, 1), (4, 3)],
    &[(2, 1), (3, 1), (4, 1)],
    &[(1, 2), (1, 3), (2, 4), (3, 4)],
    &[(1, 2), (1, 3), (4, 2), (4, 3)],
    &[(1, 2), (3, 1), (3, 4), (4, 2)],
    &[(2, 3), (2, 4), (3, 1), (4, 1)],
    &[(2, 1), (2, 3), (4, 1), (4, 3)],
];

fn zero_based(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    edges.iter().map(|&(a, b)| (a - 1, b - 1)).collect()
}

/// Acyclic, redundancy-free configurations up to symmetry, with ids taken
/// from [`REFERENCE_LABELS`] and edges in canonical form.
pub fn enumerate_configs() -> Vec<NetworkConfig> {
    let sup = super_edges();
    let mut classes: BTreeSet<Vec<(usize, usize)>> = BTreeSet::new();
    for mask in 0..RAW_EDGE_SUBSETS {
        let edges: Vec<(usize, usize)> = (0..sup.len())
            .filter(|b| mask & (1 << b) != 0)
            .map(|b| sup[b])
            .collect();
        if !is_acyclic(&edges) || has_redundant_edge(&edges) {
            continue;
        }
        classes.insert(canonical_edges(&edges));
    }
    let mut out: Vec<NetworkConfig> = classes
        .into_iter()
        .map(|edges| {
            let id = REFERENCE_LABELS
                .iter()
                .position(|l| canonical_edges(&zero_based(l)) == edges)
                .map(|k| k + 1)
                .unwrap_or(0);
            NetworkConfig { id, edges }
        })
        .collect();
    out.sort_by_key(|c| (c.id == 0, c.id));
    out
}

/// Instance `stream` of the generator seeded with `seed`.
pub fn sample_instance_stream(seed: u64, stream: u64) -> ConstellationInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut g = [[0.0; 2]; NODES];
    for gi in g.iter_mut() {
        *gi = [draw(), draw()];
    }
    let mut r = [[[0.0; 2]; NODES]; NODES];
    for (i, ri) in r.iter_mut().enumerate() {
        for (j, rij) in ri.iter_mut().enumerate() {
            if i != j {
                *rij = [draw(), draw()];
            }
        }
    }
    ConstellationInstance { g, r }
}

pub fn sample_instance(seed: u64) -> ConstellationInstance {
    sample_instance_stream(seed, 0)
}

impl ConstellationInstance {
    fn cost_builder(&self, i: usize) -> CostBuilder {
        let mut b = CostBuilder::new(DIM);
        for d in 0..2 {
            b.square(&[(2 * i + d, 1.0)], -self.g[i][d], 2.0);
            for j in 0..NODES {
                if j != i {
                    b.square(
                        &[(2 * j + d, 1.0), (2 * i + d, -1.0)],
                        -self.r[i][j][d],
                        2.0,
                    );
                }
            }
        }
        b
    }

    /// Node `i`'s cost at `x`, constant term included.
    pub fn cost(&self, i: usize, x: &[f64]) -> f64 {
        let (c, k) = self.cost_builder(i).build();
        c.value(x) + k
    }

    pub fn network(&self, config: &NetworkConfig) -> QpNetwork {
        let nodes = (0..NODES)
            .map(|i| {
                let mut rows = Vec::new();
                for d in 0..2 {
                    let mut a = vec![0.0; DIM];
                    a[2 * i + d] = 1.0;
                    rows.push(Halfspace::ge(a.clone(), BOX));
                    a[2 * i + d] = -1.0;
                    rows.push(Halfspace::ge(a, BOX));
                }
                QpNode {
                    cost: self.cost_builder(i).build().0,
                    feasible: NncPolyhedron { dim: DIM, rows },
                    decision: vec![2 * i, 2 * i + 1],
                }
            })
            .collect();
        QpNetwork {
            n: DIM,
            nodes,
            edges: config.edges.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigStats {
    pub config_id: usize,
    pub edges: String,
    pub samples: usize,
    pub mean_reduction_pct: f64,
    pub se_pct: f64,
    pub ci95_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFailure {
    pub instance: usize,
    pub config_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub stats: Vec<ConfigStats>,
    pub used: usize,
    pub dropped: usize,
    pub failures: Vec<InstanceFailure>,
}

/// Node-0 equilibrium cost for every config, or the first failure.
pub fn solve_instance(
    inst: &ConstellationInstance,
    configs: &[NetworkConfig],
    opts: &SearchOptions,
) -> Result<Vec<f64>, (usize, String)> {
    let x0 = vec![0.0; DIM];
    configs
        .iter()
        .map(|c| {
            let net = inst.network(c);
            match find_equilibrium(&net, &x0, opts) {
                Ok(t) if t.termination == Termination::Equilibrium => Ok(inst.cost(0, &t.x)),
                Ok(t) => Err((
                    c.id,
                    format!("{:?}{}", t.termination, t.message.map(|m| format!(": {m}")).unwrap_or_default()),
                )),
                Err(e) => Err((c.id, e.to_string())),
            }
        })
        .collect()
}

/// Relative change of node 0's equilibrium cost against the edgeless config.
///
/// Instances for which any configuration fails are dropped from every config.
pub fn run_constellation_study(
    samples: usize,
    seed: u64,
    configs: &[NetworkConfig],
    jobs: usize,
    opts: &SearchOptions,
) -> StudyResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<Result<Vec<f64>, (usize, String)>> = pool.install(|| {
        (0..samples)
            .into_par_iter()
            .map(|k| solve_instance(&sample_instance_stream(seed, k as u64), configs, opts))
            .collect()
    });
    let base = configs.iter().position(|c| c.edges.is_empty());
    let mut per_config: Vec<Vec<f64>> = vec![Vec::new(); configs.len()];
    let mut failures = Vec::new();
    let mut used = 0;
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(costs) => {
                used += 1;
                let nash = base.map(|b| costs[b]);
                for (c, v) in costs.iter().enumerate() {
                    let rel = match nash {
                        Some(n) => 100.0 * (v - n) / n.abs(),
                        None => f64::NAN,
                    };
                    per_config[c].push(rel);
                }
            }
            Err((config_id, reason)) => failures.push(InstanceFailure {
                instance: k,
                config_id,
                reason,
            }),
        }
    }
    let stats = configs
        .iter()
        .zip(&per_config)
        .map(|(c, v)| {
            let (mean, se) = mean_se(v);
            ConfigStats {
                config_id: c.id,
                edges: c.to_string(),
                samples: v.len(),
                mean_reduction_pct: mean,
                se_pct: se,
                ci95_pct: 1.96 * se,
            }
        })
        .collect();
    StudyResult {
        stats,
        used,
        dropped: failures.len(),
        failures,
    }
}
