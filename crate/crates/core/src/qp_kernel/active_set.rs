//! Primal active-set method for dense convex QPs with a null-space step.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{lstsq, null_space};

/// `min ½ yᵀHy + gᵀy` s.t. `G y + h >= 0`, `E y + e = 0`.
pub(crate) struct DenseQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub ineq: DMatrix<f64>,
    pub ineq_off: DVector<f64>,
    pub eq: DMatrix<f64>,
}

pub(crate) enum Outcome {
    Optimal { y: DVector<f64> },
    Unbounded { y: DVector<f64> },
    IterationLimit { y: DVector<f64> },
}

const CURVATURE_TOL: f64 = 1e-10;

impl DenseQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn working_matrix(&self, work: &[usize]) -> DMatrix<f64> {
        let n = self.dim();
        let p = self.eq.nrows();
        let mut a = DMatrix::zeros(p + work.len(), n);
        if p > 0 {
            a.view_mut((0, 0), (p, n)).copy_from(&self.eq);
        }
        for (k, &i) in work.iter().enumerate() {
            a.row_mut(p + k).copy_from(&self.ineq.row(i));
        }
        a
    }

    pub fn ineq_residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.ineq * y + &self.ineq_off
    }

    /// Runs the active-set iteration from a feasible `y0`.
    pub fn solve_from(&self, y0: DVector<f64>) -> Outcome {
        let n = self.dim();
        let m = self.ineq.nrows();
        let mut y = y0;
        let mut work: Vec<usize> = Vec::new();
        let max_iter = 50 * (n + m) + 100;
        let scale = 1.0 + self.h.amax() + self.g.amax();

        for _ in 0..max_iter {
            let a_w = self.working_matrix(&work);
            let z = null_space(&a_w, 1e-11);
            let grad = &self.h * &y + &self.g;

            let mut step: Option<(DVector<f64>, bool)> = None;
            if z.ncols() > 0 {
                let hr = z.transpose() * &self.h * &z;
                let gr = z.transpose() * &grad;
                let eig = crate::linalg::symmetrize(&hr).symmetric_eigen();
                let curv_floor = CURVATURE_TOL * scale;
                let mut newton = DVector::zeros(z.ncols());
                let mut ray = DVector::zeros(z.ncols());
                let mut has_ray = false;
                for k in 0..eig.eigenvalues.len() {
                    let v = eig.eigenvectors.column(k);
                    let c = v.dot(&gr);
                    if eig.eigenvalues[k] > curv_floor {
                        newton -= v * (c / eig.eigenvalues[k]);
                    } else if c.abs() > 1e-10 * scale {
                        ray -= v * c;
                        has_ray = true;
                    }
                }
                if has_ray {
                    let d = &z * ray;
                    let d = &d / d.norm();
                    step = Some((d, true));
                } else {
                    let p = &z * newton;
                    if p.norm() > 1e-12 * (1.0 + y.norm()) {
                        step = Some((p, false));
                    }
                }
            }

            let Some((p, is_ray)) = step else {
                // Stationary on the working face: inspect multipliers.
                let rhs = grad.clone();
                let mult = lstsq(&a_w.transpose(), &rhs, 1e-12);
                let peq = self.eq.nrows();
                let drop = work
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mult[peq + k] < -1e-9 * scale)
                    .map(|(k, &i)| (i, k))
                    .min();
                match drop {
                    Some((_, k)) => {
                        work.remove(k);
                        continue;
                    }
                    None => return Outcome::Optimal { y },
                }
            };

            let res = self.ineq_residuals(&y);
            let ap = &self.ineq * &p;
            let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
            let mut block: Option<usize> = None;
            for i in 0..m {
                if work.contains(&i) || ap[i] >= -1e-12 {
                    continue;
                }
                let a_i = res[i].max(0.0) / (-ap[i]);
                if a_i < alpha - 1e-15 || (block.is_none() && a_i <= alpha) {
                    alpha = a_i;
                    block = Some(i);
                }
            }
            if is_ray && block.is_none() {
                return Outcome::Unbounded { y };
            }
            y += p * alpha;
            if let Some(i) = block {
                work.push(i);
                work.sort_unstable();
            }
        }
        Outcome::IterationLimit { y }
    }
}

/// Finds a point of `{G y + h >= 0, E y + e = 0}` near `y_init`.
pub(crate) fn feasible_point(
    ineq: &DMatrix<f64>,
    ineq_off: &DVector<f64>,
    eq: &DMatrix<f64>,
    eq_off: &DVector<f64>,
    y_init: &DVector<f64>,
    tol: f64,
) -> Option<DVector<f64>> {
    let n = y_init.len();
    let mut y = y_init.clone();
    if eq.nrows() > 0 {
        let r = -(eq * &y + eq_off);
        y += lstsq(eq, &r, 1e-9);
        if (eq * &y + eq_off).amax() > tol {
            return None;
        }
    }
    let m = ineq.nrows();
    if m == 0 {
        return Some(y);
    }
    let res = ineq * &y + ineq_off;
    let worst = res.min();
    if worst >= 0.0 {
        return Some(y);
    }

    // Elastic LP: minimize s subject to G y + h + s >= 0, s >= 0.
    let mut g2 = DMatrix::zeros(m + 1, n + 1);
    g2.view_mut((0, 0), (m, n)).copy_from(ineq);
    for i in 0..m {
        g2[(i, n)] = 1.0;
    }
    g2[(m, n)] = 1.0;
    let mut h2 = DVector::zeros(m + 1);
    h2.rows_mut(0, m).copy_from(ineq_off);
    let mut e2 = DMatrix::zeros(eq.nrows(), n + 1);
    if eq.nrows() > 0 {
        e2.view_mut((0, 0), (eq.nrows(), n)).copy_from(eq);
    }
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let lp = DenseQp {
        h: DMatrix::zeros(n + 1, n + 1),
        g: c,
        ineq: g2,
        ineq_off: h2,
        eq: e2,
    };
    let mut start = DVector::zeros(n + 1);
    start.rows_mut(0, n).copy_from(&y);
    start[n] = -worst;
    let sol = match lp.solve_from(start) {
        Outcome::Optimal { y } | Outcome::IterationLimit { y } => y,
        Outcome::Unbounded { .. } => return None,
    };
    if sol[n] > tol {
        return None;
    }
    let y = sol.rows(0, n).into_owned();
    if (ineq * &y + ineq_off).min() < -tol {
        return None;
    }
    Some(y)
}
