//! Robust polygon avoidance against adversarial obstacles.
//!
//! Coordinates are laid out as
//! `[pᵉ, uᵉ, (p^{o_k}, u^{o_k}, q^k, ε^k) for k in 0..M]`, each block in the
//! plane except the scalar expansion `ε^k`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::{QpNetwork, QpNode};
use crate::polyhedra::{Halfspace, NncPolyhedron};
use crate::qp_kernel::QuadCost;

pub const PLANE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AvoidanceError {
    #[error("{what}: expected {expected} entries, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Polygon `{v : A v + b ≥ 0}` in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub a: Vec<[f64; PLANE]>,
    pub b: Vec<f64>,
}

impl Polygon {
    /// Axis-aligned square of half-width `h` centred at the origin.
    pub fn square(h: f64) -> Self {
        Polygon {
            a: vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            b: vec![h; 4],
        }
    }

    /// `|v₀| + |v₁| ≤ r` with unit row normals.
    pub fn diamond(r: f64) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Polygon {
            a: vec![[-s, -s], [s, -s], [-s, s], [s, s]],
            b: vec![r * s; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvoidanceInstance {
    pub ego: Polygon,
    pub ego_start: [f64; PLANE],
    pub ego_bound: f64,
    pub obstacles: Vec<Polygon>,
    pub obstacle_starts: Vec<[f64; PLANE]>,
    pub obstacle_bound: f64,
    /// Cost `½ uᵀ Q u + cᵀ u` on `(pᵉ, uᵉ)`; 4×4 and length 4.
    pub cost_q: [[f64; 4]; 4],
    pub cost_c: [f64; 4],
}

/// Coordinate offsets of each block in `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvoidanceLayout {
    pub n: usize,
    pub p_e: usize,
    pub u_e: usize,
    pub p_o: Vec<usize>,
    pub u_o: Vec<usize>,
    pub q: Vec<usize>,
    pub eps: Vec<usize>,
}

impl AvoidanceLayout {
    pub fn new(m: usize) -> Self {
        let block = 3 * PLANE + 1;
        let base = |k: usize| 2 * PLANE + k * block;
        AvoidanceLayout {
            n: 2 * PLANE + m * block,
            p_e: 0,
            u_e: PLANE,
            p_o: (0..m).map(base).collect(),
            u_o: (0..m).map(|k| base(k) + PLANE).collect(),
            q: (0..m).map(|k| base(k) + 2 * PLANE).collect(),
            eps: (0..m).map(|k| base(k) + 3 * PLANE).collect(),
        }
    }

    pub fn obstacles(&self) -> usize {
        self.eps.len()
    }
}

impl AvoidanceInstance {
    /// Planar instance with two obstacles and a cost rewarding rightward
    /// motion while keeping the ego polygon near the horizontal axis.
    pub fn planar_two_obstacles() -> Self {
        let mut q = [[0.0; 4]; 4];
        // ½ (pᵉ₁ + uᵉ₁)²
        q[1][1] = 1.0;
        q[1][3] = 1.0;
        q[3][1] = 1.0;
        q[3][3] = 1.0;
        AvoidanceInstance {
            ego: Polygon::square(1.0),
            ego_start: [-5.0, 0.0],
            ego_bound: 15.0,
            obstacles: vec![Polygon::diamond(1.0), Polygon::diamond(1.0)],
            obstacle_starts: vec![[0.0, -1.0], [3.0, -1.0]],
            obstacle_bound: 1.0,
            cost_q: q,
            cost_c: [0.0, 0.0, -1.0, 0.0],
        }
    }

    pub fn layout(&self) -> AvoidanceLayout {
        AvoidanceLayout::new(self.obstacles.len())
    }

    /// Initial iterate: starting positions set, everything else zero.
    pub fn initial_point(&self) -> Vec<f64> {
        let l = self.layout();
        let mut x = vec![0.0; l.n];
        x[l.p_e..l.p_e + PLANE].copy_from_slice(&self.ego_start);
        for (k, s) in self.obstacle_starts.iter().enumerate() {
            x[l.p_o[k]..l.p_o[k] + PLANE].copy_from_slice(s);
        }
        x
    }

    fn check(&self) -> Result<(), AvoidanceError> {
        let m = self.obstacles.len();
        if self.obstacle_starts.len() != m {
            return Err(AvoidanceError::Dimension {
                what: "obstacle starts",
                expected: m,
                got: self.obstacle_starts.len(),
            });
        }
        for p in std::iter::once(&self.ego).chain(&self.obstacles) {
            if p.a.len() != p.b.len() {
                return Err(AvoidanceError::Dimension {
                    what: "polygon offsets",
                    expected: p.a.len(),
                    got: p.b.len(),
                });
            }
        }
        Ok(())
    }
}

fn box_rows(n: usize, start: usize, bound: f64) -> Vec<Halfspace> {
    let mut rows = Vec::new();
    for d in 0..PLANE {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; n];
            a[start + d] = s;
            rows.push(Halfspace::ge(a, bound));
        }
    }
    rows
}

fn linear_cost(n: usize, j: usize) -> QuadCost {
    let mut q = DVector::zeros(n);
    q[j] = 1.0;
    QuadCost::new(DMatrix::zeros(n, n), q).expect("square by construction")
}

/// Network with node 0 for the ego polygon, nodes `1..=M` for the
/// adversaries, and nodes `M+1..=2M` computing the expansions.
pub fn build_avoidance_qpn(inst: &AvoidanceInstance) -> Result<QpNetwork, AvoidanceError> {
    inst.check()?;
    let l = inst.layout();
    let (n, m) = (l.n, l.obstacles());

    let ego_vars = [l.p_e, l.p_e + 1, l.u_e, l.u_e + 1];
    let mut q_mat = DMatrix::zeros(n, n);
    let mut q_lin = DVector::zeros(n);
    for (a, &i) in ego_vars.iter().enumerate() {
        q_lin[i] = inst.cost_c[a];
        for (b, &j) in ego_vars.iter().enumerate() {
            q_mat[(i, j)] = inst.cost_q[a][b];
        }
    }
    let mut ego_rows = box_rows(n, l.u_e, inst.ego_bound);
    for &e in &l.eps {
        let mut a = vec![0.0; n];
        a[e] = 1.0;
        ego_rows.push(Halfspace::ge(a, 0.0));
    }
    let mut nodes = vec![QpNode {
        cost: QuadCost::new(q_mat, q_lin).expect("square by construction"),
        feasible: NncPolyhedron { dim: n, rows: ego_rows },
        decision: vec![l.u_e, l.u_e + 1],
    }];
    let mut edges = Vec::new();

    for k in 0..m {
        nodes.push(QpNode {
            cost: linear_cost(n, l.eps[k]),
            feasible: NncPolyhedron {
                dim: n,
                rows: box_rows(n, l.u_o[k], inst.obstacle_bound),
            },
            decision: vec![l.u_o[k], l.u_o[k] + 1],
        });
        edges.push((0, 1 + k));
        edges.push((1 + k, 1 + m + k));
    }

    for k in 0..m {
        let mut rows = Vec::new();
        // A (p + u + q) + b + ε ≥ 0 for both polygons.
        let polys = [
            (&inst.ego, l.p_e, l.u_e),
            (&inst.obstacles[k], l.p_o[k], l.u_o[k]),
        ];
        for (poly, p, u) in polys {
            for (row, &b) in poly.a.iter().zip(&poly.b) {
                let mut a = vec![0.0; n];
                for d in 0..PLANE {
                    a[p + d] += row[d];
                    a[u + d] += row[d];
                    a[l.q[k] + d] += row[d];
                }
                a[l.eps[k]] = 1.0;
                rows.push(Halfspace::ge(a, b));
            }
        }
        nodes.push(QpNode {
            cost: linear_cost(n, l.eps[k]),
            feasible: NncPolyhedron { dim: n, rows },
            decision: vec![l.eps[k], l.q[k], l.q[k] + 1],
        });
    }

    Ok(QpNetwork { n, nodes, edges })
}
