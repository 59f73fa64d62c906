//! JSON problem files.
//!
//! Node and variable indices in files are 1-based; the library is 0-based.
//! A constraint `{"a": a, "b": b, "kind": k}` reads `a·x + b ≥ 0`, `> 0` or
//! `= 0` for `k` equal to `ge`, `gt` or `eq`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use qpnet::{Halfspace, NncPolyhedron, QpNetwork, QpNode, QuadCost, RowKind};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("node {node}: {what}")]
    Node { node: usize, what: String },
    #[error("edge [{0}, {1}] refers to a missing node")]
    Edge(usize, usize),
    #[error("init has {got} entries, expected {expected}")]
    Init { expected: usize, got: usize },
    #[error("names has {got} entries, expected {expected}")]
    Names { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Ge,
    Gt,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub a: Vec<f64>,
    pub b: f64,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triplets {
    /// `[i, j, v]` entries, 1-based; repeated entries add up.
    pub triplets: Vec<(usize, usize, f64)>,
}

/// Quadratic term as nested rows, a flat row-major array, or triplets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
    Sparse(Triplets),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    #[serde(rename = "Q")]
    pub q_mat: MatrixSpec,
    pub q: Vec<f64>,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    /// Optional coordinate labels used in summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl MatrixSpec {
    fn to_dense(&self, n: usize, node: usize) -> Result<DMatrix<f64>, ProblemError> {
        let bad = |what: String| ProblemError::Node { node, what };
        match self {
            MatrixSpec::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(bad(format!("Q must be {n}×{n}")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
            MatrixSpec::Flat(v) => {
                if v.len() != n * n {
                    return Err(bad(format!("flat Q has {} entries, expected {}", v.len(), n * n)));
                }
                Ok(DMatrix::from_row_slice(n, n, v))
            }
            MatrixSpec::Sparse(t) => {
                let mut m = DMatrix::zeros(n, n);
                for &(i, j, v) in &t.triplets {
                    if i == 0 || j == 0 || i > n || j > n {
                        return Err(bad(format!("triplet index ({i}, {j}) out of range")));
                    }
                    m[(i - 1, j - 1)] += v;
                }
                Ok(m)
            }
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    /// Builds the network. Structural validity (cycles, convexity) is left to
    /// [`QpNetwork::validate`].
    pub fn to_network(&self) -> Result<QpNetwork, ProblemError> {
        let n = self.n;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (k, spec) in self.nodes.iter().enumerate() {
            let node = k + 1;
            let bad = |what: String| ProblemError::Node { node, what };
            if spec.q.len() != n {
                return Err(bad(format!("q has {} entries, expected {n}", spec.q.len())));
            }
            let q_mat = spec.q_mat.to_dense(n, node)?;
            let cost = QuadCost::new(q_mat, DVector::from_column_slice(&spec.q)).map_err(|e| bad(e.to_string()))?;
            let mut rows = Vec::with_capacity(spec.constraints.len());
            for (r, c) in spec.constraints.iter().enumerate() {
                if c.a.len() != n {
                    return Err(bad(format!("constraint {} has {} coefficients, expected {n}", r + 1, c.a.len())));
                }
                let kind = match c.kind {
                    ConstraintKind::Ge => RowKind::NonStrict,
                    ConstraintKind::Gt => RowKind::Strict,
                    ConstraintKind::Eq => RowKind::Equality,
                };
                rows.push(Halfspace::new(c.a.clone(), c.b, kind));
            }
            if let Some(&v) = spec.vars.iter().find(|&&v| v == 0 || v > n) {
                return Err(bad(format!("variable {v} out of range 1..={n}")));
            }
            nodes.push(QpNode {
                cost,
                feasible: NncPolyhedron { dim: n, rows },
                decision: spec.vars.iter().map(|v| v - 1).collect(),
            });
        }
        let k = nodes.len();
        let mut edges = Vec::with_capacity(self.edges.len());
        for &[i, j] in &self.edges {
            if i == 0 || j == 0 || i > k || j > k {
                return Err(ProblemError::Edge(i, j));
            }
            edges.push((i - 1, j - 1));
        }
        if let Some(init) = &self.init {
            if init.len() != n {
                return Err(ProblemError::Init { expected: n, got: init.len() });
            }
        }
        if let Some(names) = &self.names {
            if names.len() != n {
                return Err(ProblemError::Names { expected: n, got: names.len() });
            }
        }
        Ok(QpNetwork { n, nodes, edges })
    }

    /// Dense-matrix file for `net`.
    pub fn from_network(net: &QpNetwork, init: Option<Vec<f64>>) -> Self {
        let n = net.n;
        let nodes = net
            .nodes
            .iter()
            .map(|nd| NodeSpec {
                q_mat: MatrixSpec::Rows((0..n).map(|i| (0..n).map(|j| nd.cost.q_mat[(i, j)]).collect()).collect()),
                q: nd.cost.q.iter().copied().collect(),
                constraints: nd
                    .feasible
                    .rows
                    .iter()
                    .map(|r| ConstraintSpec {
                        a: r.normal.clone(),
                        b: r.offset,
                        kind: match r.kind {
                            RowKind::NonStrict => ConstraintKind::Ge,
                            RowKind::Strict => ConstraintKind::Gt,
                            RowKind::Equality => ConstraintKind::Eq,
                        },
                    })
                    .collect(),
                vars: nd.decision.iter().map(|v| v + 1).collect(),
            })
            .collect();
        ProblemFile {
            n,
            nodes,
            edges: net.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            init,
            names: None,
        }
    }

    /// Label of coordinate `j` (0-based).
    pub fn name(&self, j: usize) -> String {
        self.names
            .as_ref()
            .map(|v| v[j].clone())
            .unwrap_or_else(|| format!("x{}", j + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BILEVEL: &str = r#"{
        "n": 4,
        "nodes": [
            {"Q": [[1,0,-1,0],[0,1,0,-1],[-1,0,1,0],[0,-1,0,1]], "q": [0,0,0,0], "vars": [3]},
            {"Q": {"triplets": [[3,3,1],[3,4,-1],[4,3,-1],[4,4,1]]}, "q": [0,0,0,0],
             "constraints": [{"a": [0,0,0,1], "b": 0, "kind": "ge"}], "vars": [4]}
        ],
        "edges": [[1, 2]],
        "init": [0, 0, -3, 4]
    }"#;

    #[test]
    fn parses_dense_and_sparse_forms() {
        let p = ProblemFile::parse(BILEVEL).unwrap();
        let net = p.to_network().unwrap();
        assert_eq!(net.edges, vec![(0, 1)]);
        assert_eq!(net.nodes[1].decision, vec![3]);
        assert_eq!(net.nodes[1].cost.q_mat[(2, 3)], -1.0);
        assert_eq!(net, qpnet::experiments::build_bilevel_example());
    }

    #[test]
    fn flat_matrix_is_row_major() {
        let m = MatrixSpec::Flat(vec![1.0, 2.0, 3.0, 4.0]).to_dense(2, 1).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BILEVEL.replace("\"edges\"", "\"edgez\"");
        assert!(matches!(ProblemFile::parse(&text), Err(ProblemError::Parse(_))));
        let text = BILEVEL.replacen("\"vars\": [3]", "\"vars\": [3], \"extra\": 1", 1);
        assert!(ProblemFile::parse(&text).is_err());
    }

    #[test]
    fn round_trip_through_network() {
        let p = ProblemFile::parse(BILEVEL).unwrap();
        let net = p.to_network().unwrap();
        let again = ProblemFile::parse(&ProblemFile::from_network(&net, p.init.clone()).to_json()).unwrap();
        assert_eq!(again.to_network().unwrap(), net);
        assert_eq!(again.init, p.init);
    }

    #[test]
    fn out_of_range_indices_are_reported() {
        let text = BILEVEL.replace("\"vars\": [4]", "\"vars\": [5]");
        let err = ProblemFile::parse(&text).unwrap().to_network().unwrap_err();
        assert!(err.to_string().contains("node 2"));
        let text = BILEVEL.replace("[[1, 2]]", "[[1, 3]]");
        assert!(matches!(
            ProblemFile::parse(&text).unwrap().to_network(),
            Err(ProblemError::Edge(1, 3))
        ));
    }
}
