//! Optimality certificates and local solution graphs.
//!
//! A local graph is a union of NNC pieces whose closures all contain a
//! reference point and which agrees with the node's solution graph near it.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::{NetworkError, QpNetwork};
use crate::polyhedra::{
    complement_of_closure, hrep_from_vrep, intersect, intersect_unions_filtered, project,
    vertex_enumerate, Halfspace, NncPolyhedron, PolyError, PolyUnion, RowKind,
};
use crate::qp_kernel::{nnls_certificate, QpError, QuadCost};

/// Largest weakly active set whose subsets are enumerated.
pub const MAX_WEAK: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0} weakly active rows exceed the enumeration limit")]
    TooManyWeak(usize),
    #[error("node {node}: reference point is not optimal on branch {branch}")]
    NotOptimalOnBranch { node: usize, branch: usize },
    #[error("node {node}: no piece of the graph contains the reference point")]
    NoLocalPiece { node: usize },
    #[error("node {node}: feasible set and child graphs do not meet")]
    NoBranches { node: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpCheck {
    NotFeasible,
    NotOptimal { residual: f64 },
    /// Multipliers indexed by the rows of the feasible set; free sign on equalities.
    Optimal { lambda: Vec<f64> },
}

impl QpCheck {
    pub fn is_optimal(&self) -> bool {
        matches!(self, QpCheck::Optimal { .. })
    }
}

/// Row indices of the feasible set split by their role at a KKT point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivePartition {
    pub strong: Vec<usize>,
    pub weak: Vec<usize>,
    pub equality: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    pub node: usize,
    pub reference: Vec<f64>,
    pub pieces: PolyUnion,
}

/// Tests whether `x` solves `min cost` over `closure(c)` in the `free` coordinates.
pub fn check_qp_solution(
    cost: &QuadCost,
    c: &NncPolyhedron,
    free: &[usize],
    x: &[f64],
    tol: f64,
) -> Result<QpCheck, GraphError> {
    if x.len() != c.dim || cost.dim() != c.dim {
        return Err(PolyError::DimensionMismatch {
            expected: c.dim,
            got: x.len(),
        }
        .into());
    }
    let mut cols: Vec<(usize, f64)> = Vec::new();
    for (r, row) in c.rows.iter().enumerate() {
        let v = row.value(x);
        let scale = 1.0 + row.normal.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        match row.kind {
            RowKind::Equality => {
                if v.abs() > tol * scale {
                    return Ok(QpCheck::NotFeasible);
                }
                cols.push((r, 1.0));
                cols.push((r, -1.0));
            }
            _ => {
                if v < -tol * scale {
                    return Ok(QpCheck::NotFeasible);
                }
                if v <= tol * scale {
                    cols.push((r, 1.0));
                }
            }
        }
    }
    let grad = cost.gradient(x);
    let q_tilde = DVector::from_iterator(free.len(), free.iter().map(|&j| grad[j]));
    let a = DMatrix::from_fn(cols.len(), free.len(), |k, j| {
        cols[k].1 * c.rows[cols[k].0].normal[free[j]]
    });
    let (w, residual) = nnls_certificate(&a, &q_tilde);
    if residual > tol * (1.0 + q_tilde.amax()) {
        return Ok(QpCheck::NotOptimal { residual });
    }
    let mut lambda = vec![0.0; c.rows.len()];
    for (k, &(r, s)) in cols.iter().enumerate() {
        lambda[r] += s * w[k];
    }
    Ok(QpCheck::Optimal { lambda })
}

pub fn active_partition(c: &NncPolyhedron, x: &[f64], lambda: &[f64], tol: f64) -> ActivePartition {
    let mut p = ActivePartition {
        strong: vec![],
        weak: vec![],
        equality: vec![],
    };
    for (r, row) in c.rows.iter().enumerate() {
        if row.kind == RowKind::Equality {
            p.equality.push(r);
            continue;
        }
        let scale = 1.0 + row.normal.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        if row.value(x) > tol * scale {
            continue;
        }
        if lambda[r] > tol {
            p.strong.push(r);
        } else {
            p.weak.push(r);
        }
    }
    p
}

/// Local solution graph of a single QP around the KKT point `(x, lambda)`.
pub fn local_qp_graph(
    cost: &QuadCost,
    c: &NncPolyhedron,
    free: &[usize],
    x: &[f64],
    lambda: &[f64],
    tol: f64,
) -> Result<PolyUnion, GraphError> {
    let n = c.dim;
    let part = active_partition(c, x, lambda, tol);
    if part.weak.len() > MAX_WEAK {
        return Err(GraphError::TooManyWeak(part.weak.len()));
    }
    let ineq_rows: Vec<usize> = (0..c.rows.len())
        .filter(|&r| c.rows[r].kind != RowKind::Equality)
        .collect();
    let mut pieces = Vec::new();
    for mask in 0u32..(1u32 << part.weak.len()) {
        let mut act: Vec<usize> = part.strong.clone();
        act.extend(
            part.weak
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &r)| r),
        );
        act.sort_unstable();
        // Multiplier columns: active inequalities, then equalities.
        let mult: Vec<usize> = act.iter().chain(&part.equality).copied().collect();
        let dim = n + mult.len();
        let mut rows = Vec::new();
        for &j in free {
            let mut a = vec![0.0; dim];
            for k in 0..n {
                a[k] = cost.q_mat[(j, k)];
            }
            for (m, &r) in mult.iter().enumerate() {
                a[n + m] = -c.rows[r].normal[j];
            }
            rows.push(Halfspace::eq(a, cost.q[j]));
        }
        for &r in &ineq_rows {
            let mut a = c.rows[r].normal.clone();
            a.resize(dim, 0.0);
            let kind = if act.contains(&r) {
                RowKind::Equality
            } else {
                RowKind::NonStrict
            };
            rows.push(Halfspace::new(a, c.rows[r].offset, kind));
        }
        for &r in &part.equality {
            let mut a = c.rows[r].normal.clone();
            a.resize(dim, 0.0);
            rows.push(Halfspace::eq(a, c.rows[r].offset));
        }
        for m in 0..act.len() {
            let mut a = vec![0.0; dim];
            a[n + m] = 1.0;
            rows.push(Halfspace::ge(a, 0.0));
        }
        let h = NncPolyhedron { dim, rows };
        let v = match vertex_enumerate(&h) {
            Ok(v) => v,
            Err(PolyError::Empty) => continue,
            Err(e) => return Err(e.into()),
        };
        let keep: Vec<usize> = (0..n).collect();
        let piece = hrep_from_vrep(&project(&v, &keep)?)?;
        pieces.push(piece);
    }
    Ok(PolyUnion::new(n, pieces).canonical())
}

/// Pieces of `C^i` intersected with one piece of every child graph.
pub fn branch_union(
    net: &QpNetwork,
    node: usize,
    child_graphs: &[&LocalGraph],
    tol: f64,
) -> Result<PolyUnion, GraphError> {
    let mut u = PolyUnion::single(net.nodes[node].feasible.clone());
    for g in child_graphs {
        u = intersect_unions_filtered(&u, &g.pieces, tol, |_| true)?;
    }
    Ok(u)
}

/// Local solution graph of a network node at `x`.
///
/// `child_graphs` are the local graphs of the node's children at the same
/// point, and `controlled` is the node's controlled coordinate set.
pub fn local_node_graph(
    net: &QpNetwork,
    node: usize,
    x: &[f64],
    controlled: &[usize],
    child_graphs: &[&LocalGraph],
    tol: f64,
) -> Result<LocalGraph, GraphError> {
    let nd = &net.nodes[node];
    let n = net.n;
    let local = |p: &NncPolyhedron| p.closure_contains(x, 10.0 * tol);

    // Branches: one closed feasible set per combination of child pieces.
    let base = nd.feasible.closure();
    let mut branches: Vec<NncPolyhedron> = vec![base.clone()];
    for g in child_graphs {
        let mut next = Vec::new();
        for b in &branches {
            for piece in &g.pieces.pieces {
                next.push(intersect(b, &piece.closure())?);
            }
        }
        branches = next;
    }

    let mut acc = PolyUnion::single(NncPolyhedron::universe(n));
    for (l, cl) in branches.iter().enumerate() {
        let lambda = match check_qp_solution(&nd.cost, cl, controlled, x, tol)? {
            QpCheck::Optimal { lambda } => lambda,
            _ => return Err(GraphError::NotOptimalOnBranch { node, branch: l }),
        };
        let s = local_qp_graph(&nd.cost, cl, controlled, x, &lambda, tol)?;
        let mut z = s.pieces;
        z.extend(complement_of_closure(cl).pieces);
        let z = PolyUnion::new(n, z);
        acc = intersect_unions_filtered(&acc, &z, tol, local)?;
        if acc.pieces.is_empty() {
            return Err(GraphError::NoLocalPiece { node });
        }
    }

    let u = branch_union(net, node, child_graphs, tol)?;
    let out = intersect_unions_filtered(&acc, &u, tol, local)?;
    if out.pieces.is_empty() {
        return Err(GraphError::NoLocalPiece { node });
    }
    Ok(LocalGraph {
        node,
        reference: x.to_vec(),
        pieces: out,
    })
}
