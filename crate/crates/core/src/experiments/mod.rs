//! Example networks and the constellation-game study.

pub mod avoidance;
pub mod constellation;
pub mod stats;

use nalgebra::{DMatrix, DVector};

use crate::network::{QpNetwork, QpNode};
use crate::polyhedra::{Halfspace, NncPolyhedron};
use crate::qp_kernel::QuadCost;

pub use avoidance::{build_avoidance_qpn, AvoidanceError, AvoidanceInstance, AvoidanceLayout, Polygon};
pub use constellation::{
    enumerate_configs, run_constellation_study, sample_instance, ConfigStats,
    ConstellationInstance, NetworkConfig, StudyResult,
};

/// Accumulates `Σ ½ w (a·x + c)²` into a quadratic cost.
pub(crate) struct CostBuilder {
    q: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
}

impl CostBuilder {
    pub fn new(n: usize) -> Self {
        CostBuilder {
            q: DMatrix::zeros(n, n),
            lin: DVector::zeros(n),
            constant: 0.0,
        }
    }

    /// Adds `½ w (Σ coef_k x_k + c)²`.
    pub fn square(&mut self, terms: &[(usize, f64)], c: f64, w: f64) -> &mut Self {
        for &(i, a) in terms {
            for &(j, b) in terms {
                self.q[(i, j)] += w * a * b;
            }
            self.lin[i] += w * c * a;
        }
        self.constant += 0.5 * w * c * c;
        self
    }

    pub fn build(&self) -> (QuadCost, f64) {
        (
            QuadCost::new(self.q.clone(), self.lin.clone()).expect("square by construction"),
            self.constant,
        )
    }
}

/// Two-node leader/follower network on `x ∈ R⁴` with `x₀, x₁` as parameters.
pub fn build_bilevel_example() -> QpNetwork {
    let n = 4;
    let (leader, _) = CostBuilder::new(n)
        .square(&[(2, 1.0), (0, -1.0)], 0.0, 1.0)
        .square(&[(3, 1.0), (1, -1.0)], 0.0, 1.0)
        .build();
    let (follower, _) = CostBuilder::new(n)
        .square(&[(3, 1.0), (2, -1.0)], 0.0, 1.0)
        .build();
    QpNetwork {
        n,
        nodes: vec![
            QpNode {
                cost: leader,
                feasible: NncPolyhedron::universe(n),
                decision: vec![2],
            },
            QpNode {
                cost: follower,
                feasible: NncPolyhedron {
                    dim: n,
                    rows: vec![Halfspace::ge(vec![0.0, 0.0, 0.0, 1.0], 0.0)],
                },
                decision: vec![3],
            },
        ],
        edges: vec![(0, 1)],
    }
}
