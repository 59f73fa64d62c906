//! Box-constrained linear mixed complementarity problems.
//!
//! Find `z` and `w = M z + q = w⁺ − w⁻` with `l <= z <= u`,
//! `(z − l) ⊥ w⁺ >= 0` and `(u − z) ⊥ w⁻ >= 0`. Free variables turn their
//! rows into equations, which are eliminated before Lemke runs on the
//! remaining bounded part.

mod lemke;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use lemke::{lemke, LemkeOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmcpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bounds for coordinate {index} are invalid (l > u or NaN)")]
    InvalidBounds { index: usize },
    #[error("data contains non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lmcp {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmcpStatus {
    Solved,
    RayTermination,
    IterationLimit,
    /// The equations contributed by free variables admit no solution.
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmcpSolution {
    pub z: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub status: LmcpStatus,
    pub pivots: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmcpOptions {
    /// Pivot cap per unit of problem size.
    pub pivots_per_var: usize,
    /// Residual bound for declaring success.
    pub tol: f64,
}

impl Default for LmcpOptions {
    fn default() -> Self {
        LmcpOptions {
            pivots_per_var: 50,
            tol: 1e-8,
        }
    }
}

impl Lmcp {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    fn validate(&self) -> Result<(), LmcpError> {
        let k = self.q.len();
        for got in [self.m.nrows(), self.m.ncols(), self.l.len(), self.u.len()] {
            if got != k {
                return Err(LmcpError::DimensionMismatch { expected: k, got });
            }
        }
        if self.m.iter().chain(self.q.iter()).any(|v| !v.is_finite()) {
            return Err(LmcpError::NonFinite);
        }
        for i in 0..k {
            let (l, u) = (self.l[i], self.u[i]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY
            {
                return Err(LmcpError::InvalidBounds { index: i });
            }
        }
        Ok(())
    }

    pub fn w(&self, z: &[f64]) -> DVector<f64> {
        &self.m * DVector::from_column_slice(z) + &self.q
    }

    /// Natural-map residual `max_i |z_i − mid(l_i, u_i, z_i − w_i)|`.
    pub fn residual(&self, z: &[f64]) -> f64 {
        let w = self.w(z);
        (0..self.dim())
            .map(|i| (z[i] - (z[i] - w[i]).clamp(self.l[i], self.u[i])).abs())
            .fold(0.0, f64::max)
    }
}

fn split_w(p: &Lmcp, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = p.w(z);
    (
        w.iter().map(|v| v.max(0.0)).collect(),
        w.iter().map(|v| (-v).max(0.0)).collect(),
    )
}

fn finish(p: &Lmcp, z: Vec<f64>, status: LmcpStatus, pivots: usize) -> LmcpSolution {
    let (w_plus, w_minus) = split_w(p, &z);
    let residual = p.residual(&z);
    LmcpSolution {
        z,
        w_plus,
        w_minus,
        status,
        pivots,
        residual,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum VarKind {
    Free,
    Fixed,
    Lower,
    Upper,
    Box,
}

/// Affine expression `z_c = coef · z + constant` recorded by a pivot.
struct Eliminated {
    var: usize,
    coef: Vec<f64>,
    constant: f64,
}

struct Reduction {
    a: DMatrix<f64>,
    b: DVector<f64>,
    row_live: Vec<bool>,
    col_live: Vec<bool>,
    eliminated: Vec<Eliminated>,
}

impl Reduction {
    fn pivot(&mut self, r: usize, c: usize) {
        let k = self.b.len();
        let p = self.a[(r, c)];
        let mut coef = vec![0.0; k];
        for j in 0..k {
            if j != c && self.col_live[j] {
                coef[j] = -self.a[(r, j)] / p;
            }
        }
        let constant = -self.b[r] / p;
        for i in 0..k {
            if i == r || !self.row_live[i] {
                continue;
            }
            let f = self.a[(i, c)] / p;
            if f == 0.0 {
                continue;
            }
            for j in 0..k {
                if self.col_live[j] {
                    let v = self.a[(r, j)];
                    self.a[(i, j)] -= f * v;
                }
            }
            self.a[(i, c)] = 0.0;
            self.b[i] -= f * self.b[r];
        }
        self.row_live[r] = false;
        self.col_live[c] = false;
        self.eliminated.push(Eliminated {
            var: c,
            coef,
            constant,
        });
    }

    fn row_max(&self, r: usize) -> f64 {
        (0..self.b.len())
            .filter(|&j| self.col_live[j])
            .map(|j| self.a[(r, j)].abs())
            .fold(0.0, f64::max)
    }

    fn col_max(&self, c: usize) -> f64 {
        (0..self.b.len())
            .filter(|&i| self.row_live[i])
            .map(|i| self.a[(i, c)].abs())
            .fold(0.0, f64::max)
    }
}

/// Solves the LMCP. Failure modes are reported through [`LmcpStatus`].
pub fn solve_lmcp(p: &Lmcp, opts: &LmcpOptions) -> Result<LmcpSolution, LmcpError> {
    p.validate()?;
    let k = p.dim();
    let scale = 1.0 + p.m.amax();
    let zero_tol = 1e-12 * scale;
    let piv_tol = 1e-9 * scale;

    let kind: Vec<VarKind> = (0..k)
        .map(|i| match (p.l[i].is_finite(), p.u[i].is_finite()) {
            (false, false) => VarKind::Free,
            (true, true) if p.l[i] == p.u[i] => VarKind::Fixed,
            (true, true) => VarKind::Box,
            (true, false) => VarKind::Lower,
            (false, true) => VarKind::Upper,
        })
        .collect();

    let mut red = Reduction {
        a: p.m.clone(),
        b: p.q.clone(),
        row_live: vec![true; k],
        col_live: vec![true; k],
        eliminated: Vec::new(),
    };
    let mut z = vec![0.0; k];

    // Fixed variables become constants; their rows carry no condition.
    for i in 0..k {
        if kind[i] == VarKind::Fixed {
            z[i] = p.l[i];
            for r in 0..k {
                red.b[r] += red.a[(r, i)] * p.l[i];
                red.a[(r, i)] = 0.0;
            }
            red.col_live[i] = false;
            red.row_live[i] = false;
        }
    }

    let inconsistent = |z: Vec<f64>| Ok(finish(p, z, LmcpStatus::Inconsistent, 0));

    // Drop free columns and free rows that vanish identically.
    for i in 0..k {
        if kind[i] == VarKind::Free && red.col_max(i) <= zero_tol {
            red.col_live[i] = false;
        }
    }
    for i in 0..k {
        if kind[i] == VarKind::Free && red.row_live[i] && red.row_max(i) <= zero_tol {
            if red.b[i].abs() > piv_tol {
                return inconsistent(z);
            }
            red.row_live[i] = false;
        }
    }

    let free_rows: Vec<usize> = (0..k)
        .filter(|&i| kind[i] == VarKind::Free && red.row_live[i])
        .collect();
    let free_cols: Vec<usize> = (0..k)
        .filter(|&i| kind[i] == VarKind::Free && red.col_live[i])
        .collect();

    let mut pairs: Vec<(usize, usize)>;
    if free_rows.len() == free_cols.len() {
        pairs = free_rows.iter().copied().zip(free_cols.iter().copied()).collect();
        principal_eliminate(&mut red, &mut pairs, piv_tol);
    } else {
        full_eliminate(&mut red, &free_rows, &free_cols, piv_tol);
        let rows: Vec<usize> = free_rows.iter().copied().filter(|&r| red.row_live[r]).collect();
        let cols: Vec<usize> = free_cols.iter().copied().filter(|&c| red.col_live[c]).collect();
        pairs = rows.into_iter().zip(cols).collect();
    }

    // Leftover free rows that reduced to constants must read 0 = 0.
    for i in 0..k {
        if kind[i] == VarKind::Free && red.row_live[i] && red.row_max(i) <= zero_tol {
            if red.b[i].abs() > piv_tol {
                return inconsistent(z);
            }
            red.row_live[i] = false;
            pairs.retain(|&(r, _)| r != i);
        }
    }
    for i in 0..k {
        if kind[i] == VarKind::Free && red.col_live[i] && red.col_max(i) <= zero_tol {
            red.col_live[i] = false;
            pairs.retain(|&(_, c)| c != i);
        }
    }
    let left_rows = (0..k)
        .filter(|&i| kind[i] == VarKind::Free && red.row_live[i])
        .count();
    let left_cols = (0..k)
        .filter(|&i| kind[i] == VarKind::Free && red.col_live[i])
        .count();
    if left_rows != pairs.len() || left_cols != pairs.len() {
        return inconsistent(z);
    }

    // Standard form: live columns z_V = T s + t0, live rows become LCP rows.
    let mut t_cols: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut t0 = vec![0.0; k];
    let mut std_rows: Vec<(Vec<(usize, f64)>, f64, Vec<(usize, f64)>)> = Vec::new();
    // (row combination over original rows, constant, extra std-var terms)
    for i in 0..k {
        if !red.col_live[i] || kind[i] == VarKind::Free {
            continue;
        }
        let s = t_cols.len();
        match kind[i] {
            VarKind::Lower => {
                t0[i] = p.l[i];
                t_cols.push(vec![(i, 1.0)]);
                std_rows.push((vec![(i, 1.0)], 0.0, vec![]));
            }
            VarKind::Upper => {
                t0[i] = p.u[i];
                t_cols.push(vec![(i, -1.0)]);
                std_rows.push((vec![(i, -1.0)], 0.0, vec![]));
            }
            VarKind::Box => {
                t0[i] = p.l[i];
                t_cols.push(vec![(i, 1.0)]);
                t_cols.push(vec![]);
                std_rows.push((vec![(i, 1.0)], 0.0, vec![(s + 1, 1.0)]));
                std_rows.push((vec![], p.u[i] - p.l[i], vec![(s, -1.0)]));
            }
            VarKind::Free | VarKind::Fixed => unreachable!(),
        }
    }
    for &(r, c) in &pairs {
        t_cols.push(vec![(c, 1.0)]);
        t_cols.push(vec![(c, -1.0)]);
        std_rows.push((vec![(r, 1.0)], 0.0, vec![]));
        std_rows.push((vec![(r, -1.0)], 0.0, vec![]));
    }

    let ns = t_cols.len();
    let mut ms = DMatrix::zeros(ns, ns);
    let mut qs = DVector::zeros(ns);
    // Value of live row r at z_V = T s + t0.
    let row_at = |r: usize| -> (Vec<f64>, f64) {
        let mut coef = vec![0.0; ns];
        let mut c0 = red.b[r];
        for j in 0..k {
            if red.col_live[j] {
                c0 += red.a[(r, j)] * t0[j];
            }
        }
        for (s, col) in t_cols.iter().enumerate() {
            for &(j, v) in col {
                coef[s] += red.a[(r, j)] * v;
            }
        }
        (coef, c0)
    };
    for (si, (combo, constant, extra)) in std_rows.iter().enumerate() {
        qs[si] = *constant;
        for &(r, sign) in combo {
            let (coef, c0) = row_at(r);
            for s in 0..ns {
                ms[(si, s)] += sign * coef[s];
            }
            qs[si] += sign * c0;
        }
        for &(s, v) in extra {
            ms[(si, s)] += v;
        }
    }

    let max_pivots = opts.pivots_per_var * ns.max(k).max(1);
    let (outcome, pivots) = lemke(&ms, &qs, max_pivots);
    let s = match outcome {
        LemkeOutcome::Solved(s) => s,
        LemkeOutcome::Ray => return Ok(finish(p, z, LmcpStatus::RayTermination, pivots)),
        LemkeOutcome::IterationLimit => {
            return Ok(finish(p, z, LmcpStatus::IterationLimit, pivots))
        }
    };

    for i in 0..k {
        if red.col_live[i] {
            z[i] = t0[i];
        }
    }
    for (si, col) in t_cols.iter().enumerate() {
        for &(j, v) in col {
            z[j] += v * s[si];
        }
    }
    for e in red.eliminated.iter().rev() {
        let v = e.constant + e.coef.iter().zip(&z).map(|(c, x)| c * x).sum::<f64>();
        z[e.var] = v;
    }

    let z = polish(p, z, &kind);
    let mut sol = finish(p, z, LmcpStatus::Solved, pivots);
    let bound = opts.tol * (1.0 + p.q.amax()).max(1.0 + sol.z.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    if sol.residual > bound {
        sol.status = LmcpStatus::IterationLimit;
    }
    Ok(sol)
}

/// Symmetric 1×1 / 2×2 pivoting on the paired free block.
fn principal_eliminate(red: &mut Reduction, pairs: &mut Vec<(usize, usize)>, piv_tol: f64) {
    loop {
        if pairs.is_empty() {
            return;
        }
        let mut amax = 0.0_f64;
        for &(r, _) in pairs.iter() {
            for &(_, c) in pairs.iter() {
                amax = amax.max(red.a[(r, c)].abs());
            }
        }
        if amax <= piv_tol {
            return;
        }
        let (mut b1, mut v1) = (None, 0.0_f64);
        for (k, &(r, c)) in pairs.iter().enumerate() {
            let v = red.a[(r, c)].abs();
            if v > v1 {
                v1 = v;
                b1 = Some(k);
            }
        }
        if v1 >= 0.1 * amax {
            let (r, c) = pairs.remove(b1.unwrap());
            red.pivot(r, c);
            continue;
        }
        let (mut b2, mut v2) = (None, 0.0_f64);
        for k1 in 0..pairs.len() {
            for k2 in k1 + 1..pairs.len() {
                let (r1, c1) = pairs[k1];
                let (r2, c2) = pairs[k2];
                let det = red.a[(r1, c1)] * red.a[(r2, c2)] - red.a[(r1, c2)] * red.a[(r2, c1)];
                if det.abs() > v2 {
                    v2 = det.abs();
                    b2 = Some((k1, k2));
                }
            }
        }
        match b2 {
            Some((k1, k2)) if v2 > piv_tol * amax => {
                let (r2, c2) = pairs.remove(k2);
                let (r1, c1) = pairs.remove(k1);
                if red.a[(r1, c2)].abs() >= red.a[(r1, c1)].abs() {
                    red.pivot(r1, c2);
                    red.pivot(r2, c1);
                } else {
                    red.pivot(r1, c1);
                    red.pivot(r2, c2);
                }
            }
            _ if v1 > piv_tol => {
                let (r, c) = pairs.remove(b1.unwrap());
                red.pivot(r, c);
            }
            _ => return,
        }
    }
}

/// Complete pivoting over the free rows and columns, ignoring any pairing.
fn full_eliminate(red: &mut Reduction, rows: &[usize], cols: &[usize], piv_tol: f64) {
    loop {
        let mut best = None;
        let mut bv = piv_tol;
        for &r in rows.iter().filter(|&&r| red.row_live[r]) {
            for &c in cols.iter().filter(|&&c| red.col_live[c]) {
                let v = red.a[(r, c)].abs();
                if v > bv {
                    bv = v;
                    best = Some((r, c));
                }
            }
        }
        match best {
            Some((r, c)) => red.pivot(r, c),
            None => return,
        }
    }
}

/// Re-solves the equations of the identified active set exactly.
fn polish(p: &Lmcp, z: Vec<f64>, kind: &[VarKind]) -> Vec<f64> {
    let k = p.dim();
    let w = p.w(&z);
    let act_tol = 1e-7 * (1.0 + p.q.amax());
    let mut unknown = Vec::new();
    let mut fixed = vec![None; k];
    for i in 0..k {
        match kind[i] {
            VarKind::Fixed => fixed[i] = Some(p.l[i]),
            VarKind::Free => unknown.push(i),
            _ => {
                let at_l = p.l[i].is_finite() && z[i] - p.l[i] <= act_tol && w[i] > act_tol;
                let at_u = p.u[i].is_finite() && p.u[i] - z[i] <= act_tol && w[i] < -act_tol;
                if at_l {
                    fixed[i] = Some(p.l[i]);
                } else if at_u {
                    fixed[i] = Some(p.u[i]);
                } else {
                    unknown.push(i);
                }
            }
        }
    }
    if unknown.is_empty() {
        let cand: Vec<f64> = (0..k).map(|i| fixed[i].unwrap_or(z[i])).collect();
        return if p.residual(&cand) <= p.residual(&z) { cand } else { z };
    }
    let nu = unknown.len();
    let a = DMatrix::from_fn(nu, nu, |i, j| p.m[(unknown[i], unknown[j])]);
    let rhs = DVector::from_fn(nu, |i, _| {
        let r = unknown[i];
        -p.q[r]
            - (0..k)
                .filter_map(|j| fixed[j].map(|v| p.m[(r, j)] * v))
                .sum::<f64>()
    });
    // Minimum-norm correction keeps degenerate directions at the pivoted point.
    let z_u = DVector::from_fn(nu, |i, _| z[unknown[i]]);
    let delta = crate::linalg::lstsq(&a, &(rhs - &a * &z_u), 1e-13);
    let mut cand: Vec<f64> = (0..k).map(|i| fixed[i].unwrap_or(z[i])).collect();
    for (i, &j) in unknown.iter().enumerate() {
        cand[j] = z_u[i] + delta[i];
    }
    if p.residual(&cand) <= p.residual(&z) {
        cand
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(m: f64, q: f64, l: f64, u: f64) -> Lmcp {
        Lmcp {
            m: DMatrix::from_element(1, 1, m),
            q: DVector::from_element(1, q),
            l: vec![l],
            u: vec![u],
        }
    }

    #[test]
    fn scalar_lower_bounded() {
        let s = solve_lmcp(&scalar(1.0, -2.0, 0.0, f64::INFINITY), &LmcpOptions::default()).unwrap();
        assert_eq!(s.status, LmcpStatus::Solved);
        assert!((s.z[0] - 2.0).abs() < 1e-12);
        let s = solve_lmcp(&scalar(1.0, 2.0, 0.0, f64::INFINITY), &LmcpOptions::default()).unwrap();
        assert_eq!(s.z[0], 0.0);
        assert!((s.w_plus[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_box_hits_upper() {
        let s = solve_lmcp(&scalar(1.0, -5.0, -1.0, 1.0), &LmcpOptions::default()).unwrap();
        assert_eq!(s.status, LmcpStatus::Solved);
        assert!((s.z[0] - 1.0).abs() < 1e-12);
        assert!((s.w_minus[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn free_linear_system() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 1.0]);
        let q = DVector::from_vec(vec![-1.0, -3.0]);
        let p = Lmcp {
            m,
            q,
            l: vec![f64::NEG_INFINITY; 2],
            u: vec![f64::INFINITY; 2],
        };
        let s = solve_lmcp(&p, &LmcpOptions::default()).unwrap();
        assert_eq!(s.status, LmcpStatus::Solved);
        assert!((s.z[0] - 1.0).abs() < 1e-12 && (s.z[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_zero_row() {
        let p = Lmcp {
            m: DMatrix::zeros(1, 1),
            q: DVector::from_element(1, 1.0),
            l: vec![f64::NEG_INFINITY],
            u: vec![f64::INFINITY],
        };
        let s = solve_lmcp(&p, &LmcpOptions::default()).unwrap();
        assert_eq!(s.status, LmcpStatus::Inconsistent);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(matches!(
            solve_lmcp(&scalar(1.0, 0.0, 1.0, 0.0), &LmcpOptions::default()),
            Err(LmcpError::InvalidBounds { index: 0 })
        ));
    }

    #[test]
    fn kkt_of_lp_with_free_primal() {
        // min x s.t. x >= 1, as z = (x, λ): rows [1 - λ = 0 ; x - 1 ⊥ λ >= 0]
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let q = DVector::from_vec(vec![1.0, -1.0]);
        let p = Lmcp {
            m,
            q,
            l: vec![f64::NEG_INFINITY, 0.0],
            u: vec![f64::INFINITY; 2],
        };
        let s = solve_lmcp(&p, &LmcpOptions::default()).unwrap();
        assert_eq!(s.status, LmcpStatus::Solved);
        assert!((s.z[0] - 1.0).abs() < 1e-12 && (s.z[1] - 1.0).abs() < 1e-12);
    }
}
