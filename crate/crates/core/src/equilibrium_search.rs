//! Layered equilibrium search over a QP network.
//!
//! Layers are swept from the deepest to the shallowest. A layer whose nodes
//! are all optimal on every branch of their (child-restricted) feasible sets
//! contributes local solution graphs; otherwise the layer is moved to a Nash
//! point of the chosen branches and the sweep restarts.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lmcp::{solve_lmcp, Lmcp, LmcpError, LmcpOptions, LmcpStatus};
use crate::network::{NetworkError, QpNetwork};
use crate::polyhedra::{NncPolyhedron, PolyUnion, RowKind};
use crate::qp_kernel::QuadCost;
use crate::solution_graph::{
    branch_union, check_qp_solution, local_node_graph, GraphError, LocalGraph,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lmcp(#[from] LmcpError),
    #[error("network failed validation: {0}")]
    Invalid(String),
    #[error("initial point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("layer equilibrium problem ended with status {0:?}")]
    LmcpFailure(LmcpStatus),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashParticipant {
    pub node: usize,
    pub cost: QuadCost,
    /// Closed feasible set.
    pub feasible: NncPolyhedron,
    pub controlled: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNashProblem {
    pub n: usize,
    pub participants: Vec<NashParticipant>,
}

/// LMCP for a layer together with the layout of its variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledLmcp {
    pub lmcp: Lmcp,
    /// Coordinates of `x` that make up the leading block of `z`.
    pub joint: Vec<usize>,
    pub n_stationarity: usize,
    pub n_multipliers: usize,
}

/// Stacks the KKT conditions of all participants into one LMCP in
/// `z = (x_J, ψ, λ)`, where `J` is the union of controlled coordinates
/// (first-occurrence order) and the remaining coordinates enter `q`.
pub fn assemble_lmcp(prob: &LayerNashProblem, x: &[f64]) -> AssembledLmcp {
    let n = prob.n;
    let mut joint: Vec<usize> = Vec::new();
    for p in &prob.participants {
        for &c in &p.controlled {
            if !joint.contains(&c) {
                joint.push(c);
            }
        }
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &c) in joint.iter().enumerate() {
        pos[c] = k;
    }
    let nh = joint.len();
    let nt: usize = prob.participants.iter().map(|p| p.controlled.len()).sum();
    let m: usize = prob.participants.iter().map(|p| p.feasible.rows.len()).sum();
    let k = nh + nt + m;
    let mut mm = DMatrix::zeros(k, k);
    let mut q = DVector::zeros(k);
    let mut l = vec![f64::NEG_INFINITY; k];
    let u = vec![f64::INFINITY; k];

    let mut srow = nh;
    let mut crow = nh + nt;
    for p in &prob.participants {
        let row0 = crow;
        for (r, h) in p.feasible.rows.iter().enumerate() {
            let i = row0 + r;
            let mut off = h.offset;
            for c in 0..n {
                if pos[c] == usize::MAX {
                    off += h.normal[c] * x[c];
                } else {
                    mm[(i, pos[c])] = h.normal[c];
                }
            }
            q[i] = off;
            if h.kind != RowKind::Equality {
                l[i] = 0.0;
            }
        }
        crow += p.feasible.rows.len();
        for &j in &p.controlled {
            let mut off = p.cost.q[j];
            for c in 0..n {
                if pos[c] == usize::MAX {
                    off += p.cost.q_mat[(j, c)] * x[c];
                } else {
                    mm[(srow, pos[c])] = p.cost.q_mat[(j, c)];
                }
            }
            for (r, h) in p.feasible.rows.iter().enumerate() {
                mm[(srow, row0 + r)] = -h.normal[j];
            }
            q[srow] = off;
            srow += 1;
        }
    }
    AssembledLmcp {
        lmcp: Lmcp { m: mm, q, l, u },
        joint,
        n_stationarity: nt,
        n_multipliers: m,
    }
}

/// Moves the controlled coordinates of a layer to a Nash point.
pub fn solve_layer_nash(
    prob: &LayerNashProblem,
    x: &[f64],
    opts: &LmcpOptions,
) -> Result<Vec<f64>, SearchError> {
    let a = assemble_lmcp(prob, x);
    let sol = solve_lmcp(&a.lmcp, opts)?;
    if sol.status != LmcpStatus::Solved {
        return Err(SearchError::LmcpFailure(sol.status));
    }
    let mut out = x.to_vec();
    for (k, &c) in a.joint.iter().enumerate() {
        out[c] = sol.z[k];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Checked,
    GraphBuilt,
    NashSolved,
    Restarted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub iterate: Vec<f64>,
    pub depth: usize,
    pub action: Action,
    /// Branch chosen per node in the current sweep, `None` if not yet visited.
    pub region_choices: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Equilibrium,
    CycleDetected,
    IterationLimit,
    LmcpFailure,
    Inconsistency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumTrace {
    pub events: Vec<TraceEvent>,
    pub termination: Termination,
    pub x: Vec<f64>,
    pub restarts: usize,
    pub message: Option<String>,
}

impl EquilibriumTrace {
    /// Iterates produced by Nash solves, preceded by the initial point.
    pub fn nash_iterates(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.events.first().map(|e| e.iterate.clone()).into_iter().collect();
        out.extend(
            self.events
                .iter()
                .filter(|e| e.action == Action::NashSolved)
                .map(|e| e.iterate.clone()),
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub tol: f64,
    pub max_restarts: usize,
    pub lmcp: LmcpOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            tol: 1e-6,
            max_restarts: 200,
            lmcp: LmcpOptions::default(),
        }
    }
}

struct Context<'a> {
    net: &'a QpNetwork,
    layers: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    has_parent: Vec<bool>,
    controlled: Vec<Vec<usize>>,
}

impl<'a> Context<'a> {
    fn new(net: &'a QpNetwork) -> Result<Self, SearchError> {
        let rep = net.validate();
        if let Some(e) = rep.errors.first() {
            return Err(SearchError::Invalid(e.to_string()));
        }
        let layers = net.depth_mapping()?.layers;
        let desc = net.descendant_sets()?;
        let k = net.num_nodes();
        Ok(Context {
            net,
            layers,
            children: (0..k).map(|i| net.children(i)).collect(),
            has_parent: (0..k).map(|i| !net.parents(i).is_empty()).collect(),
            controlled: (0..k).map(|i| net.controlled_indices(&desc, i)).collect(),
        })
    }

    fn branches(
        &self,
        i: usize,
        graphs: &[Option<LocalGraph>],
        tol: f64,
    ) -> Result<PolyUnion, GraphError> {
        let cg: Vec<&LocalGraph> = self.children[i]
            .iter()
            .map(|&c| graphs[c].as_ref().expect("child graph built before parent"))
            .collect();
        branch_union(self.net, i, &cg, tol)
    }

    /// Index of the first branch on which `x` is not optimal.
    fn first_failure(&self, i: usize, branches: &PolyUnion, x: &[f64], tol: f64) -> Result<Option<usize>, GraphError> {
        let nd = &self.net.nodes[i];
        for (l, b) in branches.pieces.iter().enumerate() {
            if !check_qp_solution(&nd.cost, &b.closure(), &self.controlled[i], x, tol)?.is_optimal() {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    fn build_graph(&self, i: usize, graphs: &[Option<LocalGraph>], x: &[f64], tol: f64) -> Result<LocalGraph, GraphError> {
        let cg: Vec<&LocalGraph> = self.children[i]
            .iter()
            .map(|&c| graphs[c].as_ref().expect("child graph built before parent"))
            .collect();
        local_node_graph(self.net, i, x, &self.controlled[i], &cg, tol)
    }
}

fn round_key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v * 1e9).round() as i64).collect()
}

/// Runs the layered search from `x0`.
pub fn find_equilibrium(
    net: &QpNetwork,
    x0: &[f64],
    opts: &SearchOptions,
) -> Result<EquilibriumTrace, SearchError> {
    if x0.len() != net.n {
        return Err(SearchError::Dimension {
            expected: net.n,
            got: x0.len(),
        });
    }
    let ctx = Context::new(net)?;
    let k = net.num_nodes();
    let tol = opts.tol;
    let mut x = x0.to_vec();
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut seen: HashSet<(Vec<i64>, usize, Vec<Option<usize>>)> = HashSet::new();
    let mut restarts = 0usize;

    let finish = |events: Vec<TraceEvent>, termination, x: Vec<f64>, restarts, message: Option<String>| {
        Ok(EquilibriumTrace {
            events,
            termination,
            x,
            restarts,
            message,
        })
    };

    'sweep: loop {
        let mut graphs: Vec<Option<LocalGraph>> = vec![None; k];
        let mut choices: Vec<Option<usize>> = vec![None; k];
        for d in (1..=ctx.layers.len()).rev() {
            let layer = &ctx.layers[d - 1];
            let mut branch_sets: Vec<PolyUnion> = Vec::with_capacity(layer.len());
            let mut satisfied: Vec<bool> = Vec::with_capacity(layer.len());
            for &i in layer {
                let b = match ctx.branches(i, &graphs, tol) {
                    Ok(b) => b,
                    Err(e) => return finish(events, Termination::Inconsistency, x, restarts, Some(e.to_string())),
                };
                if b.pieces.is_empty() {
                    let msg = GraphError::NoBranches { node: i }.to_string();
                    return finish(events, Termination::Inconsistency, x, restarts, Some(msg));
                }
                let fail = match ctx.first_failure(i, &b, &x, tol) {
                    Ok(f) => f,
                    Err(e) => return finish(events, Termination::Inconsistency, x, restarts, Some(e.to_string())),
                };
                if fail.is_none() && !b.contains(&x, tol).unwrap_or(false) {
                    let msg = format!("node {i}: point lies only on an excluded boundary of its branches");
                    return finish(events, Termination::Inconsistency, x, restarts, Some(msg));
                }
                choices[i] = Some(fail.unwrap_or(0));
                satisfied.push(fail.is_none());
                branch_sets.push(b);
            }
            events.push(TraceEvent {
                iterate: x.clone(),
                depth: d,
                action: Action::Checked,
                region_choices: choices.clone(),
            });

            if satisfied.iter().all(|s| *s) {
                if layer.iter().any(|&i| ctx.has_parent[i]) {
                    for &i in layer {
                        match ctx.build_graph(i, &graphs, &x, tol) {
                            Ok(g) => graphs[i] = Some(g),
                            Err(e) => {
                                return finish(events, Termination::Inconsistency, x, restarts, Some(e.to_string()))
                            }
                        }
                    }
                    events.push(TraceEvent {
                        iterate: x.clone(),
                        depth: d,
                        action: Action::GraphBuilt,
                        region_choices: choices.clone(),
                    });
                }
                continue;
            }

            let key = (round_key(&x), d, choices.clone());
            if !seen.insert(key) {
                return finish(events, Termination::CycleDetected, x, restarts, None);
            }

            // Branch combinations: failing nodes keep their first failing
            // branch, satisfied nodes range over all of theirs.
            let radices: Vec<usize> = layer
                .iter()
                .enumerate()
                .map(|(p, _)| if satisfied[p] { branch_sets[p].pieces.len() } else { 1 })
                .collect();
            let has_freedom = radices.iter().any(|&r| r > 1);
            let mut counter = vec![0usize; layer.len()];
            let mut solved: Option<Vec<f64>> = None;
            let mut last_status = LmcpStatus::RayTermination;
            loop {
                let picks: Vec<usize> = layer
                    .iter()
                    .enumerate()
                    .map(|(p, &i)| if satisfied[p] { counter[p] } else { choices[i].unwrap() })
                    .collect();
                let prob = LayerNashProblem {
                    n: net.n,
                    participants: layer
                        .iter()
                        .enumerate()
                        .map(|(p, &i)| NashParticipant {
                            node: i,
                            cost: net.nodes[i].cost.clone(),
                            feasible: branch_sets[p].pieces[picks[p]].closure(),
                            controlled: ctx.controlled[i].clone(),
                        })
                        .collect(),
                };
                match solve_layer_nash(&prob, &x, &opts.lmcp) {
                    Ok(xn) => {
                        for (p, &i) in layer.iter().enumerate() {
                            choices[i] = Some(picks[p]);
                        }
                        solved = Some(xn);
                        break;
                    }
                    Err(SearchError::LmcpFailure(s)) => last_status = s,
                    Err(e) => return Err(e),
                }
                // Advance the mixed-radix counter, last position fastest.
                let mut pos = layer.len();
                let mut advanced = false;
                while pos > 0 {
                    pos -= 1;
                    counter[pos] += 1;
                    if counter[pos] < radices[pos] {
                        advanced = true;
                        break;
                    }
                    counter[pos] = 0;
                }
                if !advanced {
                    break;
                }
            }
            let Some(xn) = solved else {
                let (term, msg) = if has_freedom {
                    (Termination::Inconsistency, "no branch combination admits a layer equilibrium")
                } else {
                    (Termination::LmcpFailure, "layer equilibrium problem has no solution")
                };
                return finish(
                    events,
                    term,
                    x,
                    restarts,
                    Some(format!("depth {d}: {msg} ({last_status:?})")),
                );
            };
            x = xn;
            events.push(TraceEvent {
                iterate: x.clone(),
                depth: d,
                action: Action::NashSolved,
                region_choices: choices.clone(),
            });
            restarts += 1;
            if restarts > opts.max_restarts {
                return finish(events, Termination::IterationLimit, x, restarts, None);
            }
            events.push(TraceEvent {
                iterate: x.clone(),
                depth: ctx.layers.len(),
                action: Action::Restarted,
                region_choices: vec![None; k],
            });
            continue 'sweep;
        }
        return finish(events, Termination::Equilibrium, x, restarts, None);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// Per node: whether the point is optimal on every branch.
    pub node_ok: Vec<Option<bool>>,
    pub ok: bool,
    pub message: Option<String>,
}

/// Rebuilds local graphs bottom-up at `x` and checks every node on every branch.
pub fn verify_equilibrium(net: &QpNetwork, x: &[f64], tol: f64) -> Result<VerifyReport, SearchError> {
    if x.len() != net.n {
        return Err(SearchError::Dimension {
            expected: net.n,
            got: x.len(),
        });
    }
    let ctx = Context::new(net)?;
    let k = net.num_nodes();
    let mut graphs: Vec<Option<LocalGraph>> = vec![None; k];
    let mut rep = VerifyReport {
        node_ok: vec![None; k],
        ok: false,
        message: None,
    };
    for d in (1..=ctx.layers.len()).rev() {
        for &i in &ctx.layers[d - 1] {
            let b = ctx.branches(i, &graphs, tol)?;
            let ok = !b.pieces.is_empty()
                && ctx.first_failure(i, &b, x, tol)?.is_none()
                && b.contains(x, tol).unwrap_or(false);
            rep.node_ok[i] = Some(ok);
            if !ok {
                rep.message = Some(format!("node {i} is not optimal at the point"));
                return Ok(rep);
            }
            if ctx.has_parent[i] {
                graphs[i] = Some(ctx.build_graph(i, &graphs, x, tol)?);
            }
        }
    }
    rep.ok = true;
    Ok(rep)
}
