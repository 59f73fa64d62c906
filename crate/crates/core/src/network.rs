//! QP networks: nodes, the edge relation, reachability and depth layers.
//!
//! Nodes and coordinates are 0-based throughout the library.

use std::fmt;

use thiserror::Error;

use crate::polyhedra::NncPolyhedron;
use crate::qp_kernel::{QuadCost, CONVEXITY_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct QpNode {
    pub cost: QuadCost,
    /// Feasible set, possibly with strict rows.
    pub feasible: NncPolyhedron,
    /// Private decision coordinates `J^i`.
    pub decision: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpNetwork {
    pub n: usize,
    pub nodes: Vec<QpNode>,
    /// Directed edges `(parent, child)`.
    pub edges: Vec<(usize, usize)>,
}

/// `layers[d]` holds the nodes at depth `d + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMapping {
    pub layers: Vec<Vec<usize>>,
}

impl DepthMapping {
    pub fn depth_of(&self, node: usize) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.contains(&node))
            .map(|d| d + 1)
    }

    pub fn max_depth(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("edges contain a cycle through nodes {witness:?}")]
    Cycle { witness: Vec<usize> },
    #[error("edge ({0}, {1}) is invalid")]
    BadEdge(usize, usize),
    #[error("node {node}: {what}")]
    Dimension { node: usize, what: String },
    #[error("node {node}: cost is not convex on its controlled block (min eigenvalue {min_eig:e})")]
    NonConvex { node: usize, min_eig: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkWarning {
    RedundantEdge(usize, usize),
    SharedIndex { index: usize, nodes: (usize, usize) },
}

impl fmt::Display for NetworkWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkWarning::RedundantEdge(i, j) => {
                write!(f, "edge ({i}, {j}) is implied by a longer path")
            }
            NetworkWarning::SharedIndex { index, nodes } => write!(
                f,
                "coordinate {index} is a decision of unrelated nodes {} and {}",
                nodes.0, nodes.1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub errors: Vec<NetworkError>,
    pub warnings: Vec<NetworkWarning>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl QpNetwork {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.edges.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        let mut p: Vec<usize> = self.edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    fn check_edges(&self) -> Result<(), NetworkError> {
        let k = self.num_nodes();
        for &(i, j) in &self.edges {
            if i >= k || j >= k || i == j {
                return Err(NetworkError::BadEdge(i, j));
            }
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        let k = self.num_nodes();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; k];
        let mut stack: Vec<usize> = Vec::new();
        fn visit(
            net: &QpNetwork,
            v: usize,
            state: &mut [u8],
            stack: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            state[v] = 1;
            stack.push(v);
            for c in net.children(v) {
                if state[c] == 1 {
                    let pos = stack.iter().position(|&s| s == c).unwrap();
                    return Some(stack[pos..].to_vec());
                }
                if state[c] == 0 {
                    if let Some(w) = visit(net, c, state, stack) {
                        return Some(w);
                    }
                }
            }
            stack.pop();
            state[v] = 2;
            None
        }
        for v in 0..k {
            if state[v] == 0 {
                if let Some(w) = visit(self, v, &mut state, &mut stack) {
                    return Some(w);
                }
            }
        }
        None
    }

    /// `r[i][j]` is true when `j` is reachable from `i` by a non-empty path.
    pub fn reachability(&self) -> Result<Vec<Vec<bool>>, NetworkError> {
        self.check_edges()?;
        if let Some(witness) = self.find_cycle() {
            return Err(NetworkError::Cycle { witness });
        }
        let k = self.num_nodes();
        let mut r = vec![vec![false; k]; k];
        for s in 0..k {
            let mut stack = self.children(s);
            while let Some(v) = stack.pop() {
                if !r[s][v] {
                    r[s][v] = true;
                    stack.extend(self.children(v));
                }
            }
        }
        Ok(r)
    }

    /// For each node, itself followed by its descendants in increasing order.
    pub fn descendant_sets(&self) -> Result<Vec<Vec<usize>>, NetworkError> {
        let r = self.reachability()?;
        Ok((0..self.num_nodes())
            .map(|i| {
                std::iter::once(i)
                    .chain((0..self.num_nodes()).filter(|&j| r[i][j]))
                    .collect()
            })
            .collect())
    }

    /// Controlled coordinates `I^i`: own decisions, then descendants' in node order.
    pub fn controlled_indices(&self, descendants: &[Vec<usize>], i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &j in &descendants[i] {
            for &c in &self.nodes[j].decision {
                if !out.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Longest-path layering from the sources.
    pub fn depth_mapping(&self) -> Result<DepthMapping, NetworkError> {
        self.reachability()?;
        let k = self.num_nodes();
        let mut depth = vec![0usize; k];
        let mut done = vec![false; k];
        let mut remaining = k;
        while remaining > 0 {
            for v in 0..k {
                if done[v] {
                    continue;
                }
                let parents = self.parents(v);
                if parents.iter().all(|&p| done[p]) {
                    depth[v] = 1 + parents.iter().map(|&p| depth[p]).max().unwrap_or(0);
                    done[v] = true;
                    remaining -= 1;
                }
            }
        }
        let max = depth.iter().copied().max().unwrap_or(0);
        let layers = (1..=max)
            .map(|d| (0..k).filter(|&v| depth[v] == d).collect())
            .collect();
        let dm = DepthMapping { layers };
        debug_assert!(self.edges.iter().all(|&(i, j)| dm.depth_of(i) < dm.depth_of(j)));
        Ok(dm)
    }

    /// Coordinates that belong to no node.
    pub fn parameter_indices(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|c| !self.nodes.iter().any(|nd| nd.decision.contains(c)))
            .collect()
    }

    /// Structural checks. Errors make the network unusable; warnings do not.
    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        for (i, nd) in self.nodes.iter().enumerate() {
            if nd.cost.dim() != self.n {
                rep.errors.push(NetworkError::Dimension {
                    node: i,
                    what: format!("cost has dimension {}, expected {}", nd.cost.dim(), self.n),
                });
            }
            if nd.feasible.dim != self.n {
                rep.errors.push(NetworkError::Dimension {
                    node: i,
                    what: format!(
                        "feasible set has dimension {}, expected {}",
                        nd.feasible.dim, self.n
                    ),
                });
            }
            if nd.decision.is_empty() {
                rep.errors.push(NetworkError::Dimension {
                    node: i,
                    what: "no decision coordinates".into(),
                });
            }
            if let Some(&c) = nd.decision.iter().find(|&&c| c >= self.n) {
                rep.errors.push(NetworkError::Dimension {
                    node: i,
                    what: format!("decision coordinate {c} out of range"),
                });
            }
        }
        if let Err(e) = self.check_edges() {
            rep.errors.push(e);
        }
        if !rep.errors.is_empty() {
            return rep;
        }
        let r = match self.reachability() {
            Ok(r) => r,
            Err(e) => {
                rep.errors.push(e);
                return rep;
            }
        };
        let desc = self.descendant_sets().expect("acyclic");
        for i in 0..self.num_nodes() {
            let idx = self.controlled_indices(&desc, i);
            let min_eig = self.nodes[i].cost.min_eigenvalue_on(&idx);
            if min_eig < CONVEXITY_FLOOR {
                rep.errors.push(NetworkError::NonConvex { node: i, min_eig });
            }
        }
        for &(i, j) in &self.edges {
            let via_other = self
                .children(i)
                .into_iter()
                .any(|c| c != j && r[c][j]);
            if via_other {
                rep.warnings.push(NetworkWarning::RedundantEdge(i, j));
            }
        }
        for a in 0..self.num_nodes() {
            for b in a + 1..self.num_nodes() {
                if r[a][b] || r[b][a] {
                    continue;
                }
                for &c in &self.nodes[a].decision {
                    if self.nodes[b].decision.contains(&c) {
                        rep.warnings.push(NetworkWarning::SharedIndex {
                            index: c,
                            nodes: (a, b),
                        });
                    }
                }
            }
        }
        rep
    }
}
