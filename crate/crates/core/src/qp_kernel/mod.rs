//! Dense convex QP kernel: quadratic costs, an active-set solver, the
//! non-negative least-squares certificate, and an emptiness test for
//! NNC polyhedra.

mod active_set;
mod nnls;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{min_eigenvalue, submatrix, symmetrize};
use crate::polyhedra::{NncPolyhedron, RowKind};
use active_set::{feasible_point, DenseQp, Outcome};

pub use nnls::nnls;

/// Eigenvalue floor below which a free block is treated as non-convex.
pub const CONVEXITY_FLOOR: f64 = -1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cost is not convex on the free block (min eigenvalue {min_eig:e})")]
    NonConvex { min_eig: f64 },
    #[error("feasible set must be closed")]
    NotClosed,
    #[error("free index {index} out of range for dimension {dim}")]
    BadIndex { index: usize, dim: usize },
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

/// `½ xᵀQx + xᵀq` with `Q` stored symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCost {
    pub q_mat: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl QuadCost {
    pub fn new(q_mat: DMatrix<f64>, q: DVector<f64>) -> Result<Self, QpError> {
        if q_mat.nrows() != q_mat.ncols() || q_mat.nrows() != q.len() {
            return Err(QpError::DimensionMismatch {
                expected: q.len(),
                got: q_mat.nrows(),
            });
        }
        Ok(QuadCost {
            q_mat: symmetrize(&q_mat),
            q,
        })
    }

    pub fn zero(n: usize) -> Self {
        QuadCost {
            q_mat: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.q_mat * &x)) + x.dot(&self.q)
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        &self.q_mat * DVector::from_column_slice(x) + &self.q
    }

    /// Smallest eigenvalue of the `idx × idx` block.
    pub fn min_eigenvalue_on(&self, idx: &[usize]) -> f64 {
        min_eigenvalue(&submatrix(&self.q_mat, idx, idx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolveResult {
    pub x_star: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
}

pub(crate) struct Restricted {
    pub ineq: DMatrix<f64>,
    pub ineq_off: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub eq_off: DVector<f64>,
    pub strict: Vec<bool>,
}

/// Rows of `c` over the `free` coordinates, with the others fixed at `x`.
pub(crate) fn restrict(c: &NncPolyhedron, free: &[usize], x: &[f64]) -> Restricted {
    let mut is_free = vec![false; c.dim];
    for &i in free {
        is_free[i] = true;
    }
    let mut ineq_rows = Vec::new();
    let mut eq_rows = Vec::new();
    let mut strict = Vec::new();
    for r in &c.rows {
        let a: Vec<f64> = free.iter().map(|&i| r.normal[i]).collect();
        let off = r.offset
            + (0..c.dim)
                .filter(|&k| !is_free[k])
                .map(|k| r.normal[k] * x[k])
                .sum::<f64>();
        let amax = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let s = if amax > 1e-12 { amax } else { off.abs().max(1.0) };
        let a: Vec<f64> = a.iter().map(|v| v / s).collect();
        if r.kind == RowKind::Equality {
            eq_rows.push((a, off / s));
        } else {
            strict.push(r.kind == RowKind::Strict);
            ineq_rows.push((a, off / s));
        }
    }
    let n = free.len();
    let build = |rows: &[(Vec<f64>, f64)]| {
        let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]);
        let o = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        (m, o)
    };
    let (ineq, ineq_off) = build(&ineq_rows);
    let (eq, eq_off) = build(&eq_rows);
    Restricted {
        ineq,
        ineq_off,
        eq,
        eq_off,
        strict,
    }
}

fn check_indices(dim: usize, free: &[usize], x: &[f64]) -> Result<(), QpError> {
    if x.len() != dim {
        return Err(QpError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    if let Some(&index) = free.iter().find(|&&i| i >= dim) {
        return Err(QpError::BadIndex { index, dim });
    }
    Ok(())
}

/// Minimizes `cost` over `c`, varying only `free`; other coordinates stay at `x`.
pub fn solve_qp(
    cost: &QuadCost,
    c: &NncPolyhedron,
    free: &[usize],
    x: &[f64],
    tol: f64,
) -> Result<QpSolveResult, QpError> {
    let n = cost.dim();
    if c.dim != n {
        return Err(QpError::DimensionMismatch {
            expected: n,
            got: c.dim,
        });
    }
    check_indices(n, free, x)?;
    if !c.is_closed() {
        return Err(QpError::NotClosed);
    }
    let min_eig = cost.min_eigenvalue_on(free);
    if min_eig < CONVEXITY_FLOOR {
        return Err(QpError::NonConvex { min_eig });
    }

    let r = restrict(c, free, x);
    let y_init = DVector::from_iterator(free.len(), free.iter().map(|&i| x[i]));
    let mut full = x.to_vec();
    let Some(y0) = feasible_point(&r.ineq, &r.ineq_off, &r.eq, &r.eq_off, &y_init, tol) else {
        return Ok(QpSolveResult {
            objective: cost.value(&full),
            x_star: full,
            status: QpStatus::Infeasible,
        });
    };

    // Gradient of the free block with the fixed coordinates folded in.
    let mut fixed = DVector::from_column_slice(x);
    for &i in free {
        fixed[i] = 0.0;
    }
    let g_full = &cost.q_mat * &fixed + &cost.q;
    let qp = DenseQp {
        h: submatrix(&cost.q_mat, free, free),
        g: DVector::from_iterator(free.len(), free.iter().map(|&i| g_full[i])),
        ineq: r.ineq,
        ineq_off: r.ineq_off,
        eq: r.eq,
    };
    let (y, status) = match qp.solve_from(y0) {
        Outcome::Optimal { y } => (y, QpStatus::Optimal),
        Outcome::Unbounded { y } => (y, QpStatus::Unbounded),
        Outcome::IterationLimit { .. } => return Err(QpError::IterationLimit),
    };
    for (k, &i) in free.iter().enumerate() {
        full[i] = y[k];
    }
    Ok(QpSolveResult {
        objective: cost.value(&full),
        x_star: full,
        status,
    })
}

/// Multipliers `λ >= 0` minimizing `‖A_IJᵀ λ − q̃‖`, and that residual.
pub fn nnls_certificate(a_ij: &DMatrix<f64>, q_tilde: &DVector<f64>) -> (DVector<f64>, f64) {
    nnls(&a_ij.transpose(), q_tilde)
}

/// Whether `p` has no points, honouring strict rows.
pub fn is_empty(p: &NncPolyhedron, tol: f64) -> Result<bool, QpError> {
    let n = p.dim;
    let all: Vec<usize> = (0..n).collect();
    let zero = vec![0.0; n];
    let r = restrict(p, &all, &zero);
    let y_init = DVector::zeros(n);
    let Some(y0) = feasible_point(&r.ineq, &r.ineq_off, &r.eq, &r.eq_off, &y_init, tol) else {
        return Ok(true);
    };
    if !r.strict.iter().any(|s| *s) {
        return Ok(false);
    }
    let res0 = &r.ineq * &y0 + &r.ineq_off;
    let t0 = (0..res0.len())
        .filter(|&i| r.strict[i])
        .map(|i| res0[i])
        .fold(1.0_f64, f64::min);
    if t0 > tol {
        return Ok(false);
    }

    // Maximize t subject to strict rows >= t, other rows >= 0, t <= 1.
    let m = r.ineq.nrows();
    let mut g = DMatrix::zeros(m + 1, n + 1);
    g.view_mut((0, 0), (m, n)).copy_from(&r.ineq);
    for i in 0..m {
        if r.strict[i] {
            g[(i, n)] = -1.0;
        }
    }
    g[(m, n)] = -1.0;
    let mut h = DVector::zeros(m + 1);
    h.rows_mut(0, m).copy_from(&r.ineq_off);
    h[m] = 1.0;
    let mut e = DMatrix::zeros(r.eq.nrows(), n + 1);
    if r.eq.nrows() > 0 {
        e.view_mut((0, 0), (r.eq.nrows(), n)).copy_from(&r.eq);
    }
    let mut c = DVector::zeros(n + 1);
    c[n] = -1.0;
    let lp = DenseQp {
        h: DMatrix::zeros(n + 1, n + 1),
        g: c,
        ineq: g,
        ineq_off: h,
        eq: e,
    };
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&y0);
    start[n] = t0;
    let t = match lp.solve_from(start) {
        Outcome::Optimal { y } | Outcome::IterationLimit { y } => y[n],
        Outcome::Unbounded { .. } => 1.0,
    };
    Ok(t <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedra::Halfspace;

    fn cost_1d(q: f64, lin: f64) -> QuadCost {
        QuadCost::new(DMatrix::from_element(1, 1, q), DVector::from_element(1, lin)).unwrap()
    }

    #[test]
    fn bound_constrained_minimum() {
        let c = NncPolyhedron::new(1, vec![Halfspace::ge(vec![1.0], -1.0)]).unwrap();
        let r = solve_qp(&cost_1d(1.0, 0.0), &c, &[0], &[5.0], 1e-9).unwrap();
        assert_eq!(r.status, QpStatus::Optimal);
        assert!((r.x_star[0] - 1.0).abs() < 1e-10);
        assert!((r.objective - 0.5).abs() < 1e-10);
    }

    #[test]
    fn linear_cost_without_bound_is_unbounded() {
        let c = NncPolyhedron::new(1, vec![Halfspace::ge(vec![-1.0], 0.0)]).unwrap();
        let r = solve_qp(&cost_1d(0.0, 1.0), &c, &[0], &[-1.0], 1e-9).unwrap();
        assert_eq!(r.status, QpStatus::Unbounded);
    }

    #[test]
    fn infeasible_and_nonconvex_are_reported() {
        let c = NncPolyhedron::new(
            1,
            vec![
                Halfspace::ge(vec![1.0], -2.0),
                Halfspace::ge(vec![-1.0], 1.0),
            ],
        )
        .unwrap();
        let r = solve_qp(&cost_1d(1.0, 0.0), &c, &[0], &[0.0], 1e-9).unwrap();
        assert_eq!(r.status, QpStatus::Infeasible);
        let open = NncPolyhedron::universe(1);
        assert!(matches!(
            solve_qp(&cost_1d(-1.0, 0.0), &open, &[0], &[0.0], 1e-9),
            Err(QpError::NonConvex { .. })
        ));
    }

    #[test]
    fn fixed_coordinates_are_untouched() {
        // cost ½(x0 - x1)², x1 fixed at 3, constraint x0 <= 1
        let q = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let cost = QuadCost::new(q, DVector::zeros(2)).unwrap();
        let c = NncPolyhedron::new(2, vec![Halfspace::ge(vec![-1.0, 0.0], 1.0)]).unwrap();
        let r = solve_qp(&cost, &c, &[0], &[0.0, 3.0], 1e-9).unwrap();
        assert!((r.x_star[0] - 1.0).abs() < 1e-10);
        assert_eq!(r.x_star[1], 3.0);
    }

    #[test]
    fn strict_emptiness() {
        let open = NncPolyhedron::new(
            1,
            vec![Halfspace::gt(vec![1.0], 0.0), Halfspace::ge(vec![-1.0], 0.0)],
        )
        .unwrap();
        assert!(is_empty(&open, 1e-9).unwrap());
        assert!(!is_empty(&open.closure(), 1e-9).unwrap());
        let half = NncPolyhedron::new(1, vec![Halfspace::gt(vec![1.0], 0.0)]).unwrap();
        assert!(!is_empty(&half, 1e-9).unwrap());
    }

    #[test]
    fn certificate_residual() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let (l, r) = nnls_certificate(&a, &DVector::from_element(1, 2.0));
        assert!((l[0] - 2.0).abs() < 1e-12 && r < 1e-12);
        let (l, r) = nnls_certificate(&a, &DVector::from_element(1, -2.0));
        assert_eq!(l[0], 0.0);
        assert!((r - 2.0).abs() < 1e-12);
    }
}
