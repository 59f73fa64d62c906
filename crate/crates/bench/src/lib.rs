//! Deterministic fixtures for the solver benchmarks.

use nalgebra::{DMatrix, DVector};
use qpnet::{Halfspace, Lmcp, NncPolyhedron};

/// Box-constrained LMCP with a positive definite plus skew matrix of order `k`.
pub fn lmcp_fixture(k: usize) -> Lmcp {
    let a = DMatrix::from_fn(k, k, |i, j| ((i * 7 + j * 13) as f64).sin());
    let skew = DMatrix::from_fn(k, k, |i, j| ((i + 2 * j) as f64).cos() - ((j + 2 * i) as f64).cos());
    let m = &a * a.transpose() + DMatrix::identity(k, k) * 0.5 + skew * 0.3;
    let q = DVector::from_fn(k, |i, _| ((i * 5) as f64).cos() * 3.0);
    let l = (0..k).map(|i| if i % 3 == 0 { f64::NEG_INFINITY } else { -1.0 }).collect();
    let u = (0..k).map(|i| if i % 4 == 0 { f64::INFINITY } else { 1.5 }).collect();
    Lmcp { m, q, l, u }
}

/// Unit cube in `n` dimensions with every vertex-adjacent corner shaved off.
pub fn shaved_cube(n: usize) -> NncPolyhedron {
    let mut rows = Vec::new();
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        rows.push(Halfspace::ge(a.clone(), 1.0));
        a[j] = -1.0;
        rows.push(Halfspace::ge(a, 1.0));
    }
    for j in 0..n {
        let a: Vec<f64> = (0..n).map(|i| if i == j { -1.0 } else { 0.2 }).collect();
        rows.push(Halfspace::ge(a, 0.9 + 0.2 * (n as f64 - 1.0)));
    }
    NncPolyhedron { dim: n, rows }
}
