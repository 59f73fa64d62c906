//! Networks of convex quadratic programs and the search for their equilibria.
//!
//! A network couples quadratic programs along a directed acyclic graph: a
//! parent node optimizes over its own variables and those of its descendants,
//! constrained to the solution graphs of its children. The crate provides the
//! polyhedral machinery for those graphs, a dense QP kernel, a Lemke solver
//! for bounded linear complementarity problems, and the layered equilibrium
//! search built on top of them.

pub mod equilibrium_search;
pub mod experiments;
pub mod linalg;
pub mod lmcp;
pub mod network;
pub mod polyhedra;
pub mod qp_kernel;
pub mod solution_graph;

pub use equilibrium_search::{
    assemble_lmcp, find_equilibrium, solve_layer_nash, verify_equilibrium, Action,
    AssembledLmcp, EquilibriumTrace, LayerNashProblem, NashParticipant, SearchError,
    SearchOptions, Termination, TraceEvent, VerifyReport,
};
pub use lmcp::{solve_lmcp, Lmcp, LmcpError, LmcpOptions, LmcpSolution, LmcpStatus};
pub use network::{
    DepthMapping, NetworkError, NetworkWarning, QpNetwork, QpNode, ValidationReport,
};
pub use polyhedra::{Halfspace, NncPolyhedron, PolyError, PolyUnion, RowKind, VRep};
pub use qp_kernel::{QpError, QpSolveResult, QpStatus, QuadCost};
pub use solution_graph::{ActivePartition, GraphError, LocalGraph, QpCheck};

/// Numerical tolerances shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Feasibility and activity threshold.
    pub feas: f64,
    /// Smallest admissible pivot magnitude.
    pub piv: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-6,
            piv: 1e-9,
        }
    }
}
