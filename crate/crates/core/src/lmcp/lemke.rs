//! Lemke's complementary pivoting method with a lexicographic ratio test.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LemkeOutcome {
    Solved(Vec<f64>),
    Ray,
    IterationLimit,
}

/// Solves `w = M z + q`, `w, z >= 0`, `wᵀz = 0` with covering vector `1`.
/// Returns the outcome and the number of pivots.
pub(crate) fn lemke(m: &DMatrix<f64>, q: &DVector<f64>, max_pivots: usize) -> (LemkeOutcome, usize) {
    let n = q.len();
    if n == 0 || q.iter().all(|v| *v >= 0.0) {
        return (LemkeOutcome::Solved(vec![0.0; n]), 0);
    }
    let z0 = 2 * n;
    let rhs = 2 * n + 1;
    let cols = 2 * n + 2;
    let mut t = DMatrix::<f64>::zeros(n, cols);
    for i in 0..n {
        t[(i, i)] = 1.0;
        for j in 0..n {
            t[(i, n + j)] = -m[(i, j)];
        }
        t[(i, z0)] = -1.0;
        t[(i, rhs)] = q[i];
    }
    let mut basis: Vec<usize> = (0..n).collect();
    let piv_tol = 1e-11 * (1.0 + m.amax());

    // Initial pivot: the row with the lexicographically smallest (q_i, e_i).
    let mut r = 0;
    for i in 1..n {
        let better = t[(i, rhs)] < t[(r, rhs)]
            || (t[(i, rhs)] == t[(r, rhs)] && lex_less(&t, i, r, n, 1.0, 1.0));
        if better {
            r = i;
        }
    }
    pivot(&mut t, r, z0);
    let mut leaving = basis[r];
    basis[r] = z0;
    let mut pivots = 1;

    while pivots < max_pivots {
        let entering = if leaving < n { leaving + n } else { leaving - n };
        let mut cand: Vec<usize> = (0..n).filter(|&i| t[(i, entering)] > piv_tol).collect();
        if cand.is_empty() {
            return (LemkeOutcome::Ray, pivots);
        }
        let theta = cand
            .iter()
            .map(|&i| t[(i, rhs)] / t[(i, entering)])
            .fold(f64::INFINITY, f64::min);
        let ratio_tol = 1e-12 * (1.0 + theta.abs());
        cand.retain(|&i| t[(i, rhs)] / t[(i, entering)] <= theta + ratio_tol);
        let r = if let Some(&i) = cand.iter().find(|&&i| basis[i] == z0) {
            i
        } else {
            let mut best = cand[0];
            for &i in &cand[1..] {
                if lex_less(&t, i, best, n, t[(i, entering)], t[(best, entering)]) {
                    best = i;
                }
            }
            best
        };
        pivot(&mut t, r, entering);
        leaving = basis[r];
        basis[r] = entering;
        pivots += 1;
        if leaving == z0 {
            let mut z = vec![0.0; n];
            for (i, &b) in basis.iter().enumerate() {
                if (n..2 * n).contains(&b) {
                    z[b - n] = t[(i, rhs)].max(0.0);
                }
            }
            return (LemkeOutcome::Solved(z), pivots);
        }
    }
    (LemkeOutcome::IterationLimit, pivots)
}

/// Compares rows `a` and `b` of `[rhs | B⁻¹]` scaled by their pivot entries.
fn lex_less(t: &DMatrix<f64>, a: usize, b: usize, n: usize, sa: f64, sb: f64) -> bool {
    let rhs = 2 * n + 1;
    let key = |row: usize, s: f64, k: usize| {
        if k == 0 {
            t[(row, rhs)] / s
        } else {
            t[(row, k - 1)] / s
        }
    };
    for k in 0..=n {
        let (va, vb) = (key(a, sa, k), key(b, sb, k));
        let tol = 1e-13 * (1.0 + va.abs().max(vb.abs()));
        if va < vb - tol {
            return true;
        }
        if va > vb + tol {
            return false;
        }
    }
    false
}

fn pivot(t: &mut DMatrix<f64>, r: usize, c: usize) {
    let p = t[(r, c)];
    let cols = t.ncols();
    for j in 0..cols {
        t[(r, j)] /= p;
    }
    for i in 0..t.nrows() {
        if i == r {
            continue;
        }
        let f = t[(i, c)];
        if f == 0.0 {
            continue;
        }
        for j in 0..cols {
            let v = t[(r, j)];
            t[(i, j)] -= f * v;
        }
        t[(i, c)] = 0.0;
    }
}
