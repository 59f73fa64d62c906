//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Thin SVD `a = u · diag(s) · v_t` with `k = min(m, n)` singular triplets.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    fn max_sv(&self) -> f64 {
        self.s.iter().fold(0.0_f64, |m, v| m.max(*v))
    }
}

fn raw_svd(a: &DMatrix<f64>) -> Svd {
    if a.nrows() >= a.ncols() {
        let d = a.clone().svd(true, true);
        Svd {
            u: d.u.expect("u requested"),
            s: d.singular_values,
            v_t: d.v_t.expect("v_t requested"),
        }
    } else {
        let d = a.transpose().svd(true, true);
        Svd {
            u: d.v_t.expect("v_t requested").transpose(),
            s: d.singular_values,
            v_t: d.u.expect("u requested").transpose(),
        }
    }
}

fn reconstruction_error(a: &DMatrix<f64>, d: &Svd) -> f64 {
    let r = &d.u * DMatrix::from_diagonal(&d.s) * &d.v_t;
    (r - a).amax()
}

/// SVD checked against its reconstruction. `nalgebra`'s bidiagonal QR has
/// been seen to return wrong factors for some rank-deficient inputs, in
/// which case the Gram matrix eigendecomposition is used instead.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let d = raw_svd(a);
    let scale = a.amax().max(1.0);
    if d.s.iter().all(|v| v.is_finite()) && reconstruction_error(a, &d) <= 1e-10 * scale {
        return d;
    }
    let (m, n) = (a.nrows(), a.ncols());
    let k = m.min(n);
    let tall = m >= n;
    let g = if tall { a.transpose() * a } else { a * a.transpose() };
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let s = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()));
    let basis = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    let other = if tall { a * &basis } else { a.transpose() * &basis };
    let mut other_n = other.clone();
    for c in 0..k {
        let nrm = other.column(c).norm();
        if nrm > 1e-300 {
            other_n.column_mut(c).scale_mut(1.0 / nrm);
        } else {
            other_n.column_mut(c).fill(0.0);
        }
    }
    if tall {
        Svd {
            u: other_n,
            s,
            v_t: basis.transpose(),
        }
    } else {
        Svd {
            u: basis,
            s,
            v_t: other_n.transpose(),
        }
    }
}

/// Orthonormal basis of the null space of `a` (columns of the result).
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least n rows so the SVD exposes all right singular vectors.
    let m = a.nrows().max(n);
    let mut padded = DMatrix::zeros(m, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let d = svd(&padded);
    let scale = d.max_sv().max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| d.s[i] <= tol * scale)
        .map(|i| d.v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let d = svd(a);
    let cut = tol * d.max_sv().max(1.0);
    let utb = d.u.transpose() * b;
    let mut w = DVector::zeros(d.s.len());
    for i in 0..d.s.len() {
        if d.s[i] > cut {
            w[i] = utb[i] / d.s[i];
        }
    }
    d.v_t.transpose() * w
}

/// Numerical rank of `a`.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let d = svd(a);
    let scale = d.max_sv().max(1.0);
    d.s.iter().filter(|s| **s > tol * scale).count()
}

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    if q.nrows() == 0 {
        return 0.0;
    }
    let eig = q.clone().symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v))
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
