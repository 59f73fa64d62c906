//! Not-necessarily-closed polyhedra, their finite unions, and conversions
//! between halfspace and generator descriptions.
//!
//! A row `a·x + b` carries one of three relations to zero: `>=`, `>`, or `=`.

mod dd;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm2};

pub use dd::{hrep_from_vrep, project, vertex_enumerate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polyhedron is empty")]
    Empty,
    #[error("projection index {index} out of range for dimension {dim}")]
    BadIndex { index: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    NonStrict,
    Strict,
    Equality,
}

/// The set `{x : normal·x + offset (>=|>|=) 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub kind: RowKind,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64, kind: RowKind) -> Self {
        Halfspace {
            normal,
            offset,
            kind,
        }
    }

    pub fn ge(normal: Vec<f64>, offset: f64) -> Self {
        Self::new(normal, offset, RowKind::NonStrict)
    }

    pub fn gt(normal: Vec<f64>, offset: f64) -> Self {
        Self::new(normal, offset, RowKind::Strict)
    }

    pub fn eq(normal: Vec<f64>, offset: f64) -> Self {
        Self::new(normal, offset, RowKind::Equality)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }

    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let v = self.value(x);
        match self.kind {
            RowKind::NonStrict => v >= -tol,
            RowKind::Strict => v > tol,
            RowKind::Equality => v.abs() <= tol,
        }
    }

    /// Same set, scaled so the normal has unit length (or the offset unit
    /// magnitude when the normal vanishes). Equalities get a sign convention.
    pub fn normalized(&self) -> Halfspace {
        let mut s = norm2(&self.normal);
        if s < 1e-300 {
            s = self.offset.abs().max(1e-300);
        }
        let mut h = Halfspace {
            normal: self.normal.iter().map(|v| v / s).collect(),
            offset: self.offset / s,
            kind: self.kind,
        };
        if h.kind == RowKind::Equality {
            let lead = h
                .normal
                .iter()
                .chain(std::iter::once(&h.offset))
                .find(|v| v.abs() > 1e-12)
                .copied()
                .unwrap_or(1.0);
            if lead < 0.0 {
                h.normal.iter_mut().for_each(|v| *v = -*v);
                h.offset = -h.offset;
            }
        }
        h
    }

    fn close_to(&self, other: &Halfspace, tol: f64) -> bool {
        self.kind == other.kind
            && (self.offset - other.offset).abs() <= tol
            && self
                .normal
                .iter()
                .zip(&other.normal)
                .all(|(a, b)| (a - b).abs() <= tol)
    }

    fn canonical_cmp(&self, other: &Halfspace) -> Ordering {
        self.kind.cmp(&other.kind).then_with(|| {
            let a = self.normal.iter().chain(std::iter::once(&self.offset));
            let b = other.normal.iter().chain(std::iter::once(&other.offset));
            for (x, y) in a.zip(b) {
                let c = round_key(*x).cmp(&round_key(*y));
                if c != Ordering::Equal {
                    return c;
                }
            }
            Ordering::Equal
        })
    }
}

fn round_key(v: f64) -> i64 {
    (v * 1e8).round() as i64
}

/// Intersection of finitely many rows. Empty `rows` means all of R^dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NncPolyhedron {
    pub dim: usize,
    pub rows: Vec<Halfspace>,
}

impl NncPolyhedron {
    pub fn new(dim: usize, rows: Vec<Halfspace>) -> Result<Self, PolyError> {
        for r in &rows {
            if r.normal.len() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    got: r.normal.len(),
                });
            }
        }
        Ok(NncPolyhedron { dim, rows })
    }

    pub fn universe(dim: usize) -> Self {
        NncPolyhedron { dim, rows: vec![] }
    }

    pub fn is_closed(&self) -> bool {
        self.rows.iter().all(|r| r.kind != RowKind::Strict)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.rows.iter().all(|r| r.satisfied(x, tol)))
    }

    pub fn closure(&self) -> NncPolyhedron {
        NncPolyhedron {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    if r.kind == RowKind::Strict {
                        r.kind = RowKind::NonStrict;
                    }
                    r
                })
                .collect(),
        }
    }

    /// Whether `x` lies in the closure, i.e. every strict row read as `>=`.
    pub fn closure_contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim
            && self.rows.iter().all(|r| {
                let v = r.value(x);
                match r.kind {
                    RowKind::Equality => v.abs() <= tol,
                    _ => v >= -tol,
                }
            })
    }

    /// Rows normalized, sorted, and deduplicated. Equalities are replaced by
    /// their reduced row echelon form and eliminated from the other rows.
    pub fn canonical(&self) -> NncPolyhedron {
        let n = self.dim;
        let mut eqs: Vec<Vec<f64>> = Vec::new();
        let mut others: Vec<Halfspace> = Vec::new();
        for r in &self.rows {
            if r.kind == RowKind::Equality {
                let mut v = r.normal.clone();
                v.push(r.offset);
                eqs.push(v);
            } else {
                others.push(r.clone());
            }
        }
        let (pivots, infeasible) = rref(&mut eqs, n);
        let mut rows: Vec<Halfspace> = Vec::new();
        for row in &eqs {
            rows.push(Halfspace::eq(row[..n].to_vec(), row[n]).normalized());
        }
        let mut infeasible = infeasible;
        for mut r in others {
            let before = norm2(&r.normal).max(r.offset.abs()).max(1e-300);
            for (row, &c) in eqs.iter().zip(&pivots) {
                let f = r.normal[c];
                if f != 0.0 {
                    for j in 0..n {
                        r.normal[j] -= f * row[j];
                    }
                    r.offset -= f * row[n];
                    r.normal[c] = 0.0;
                }
            }
            for v in r.normal.iter_mut() {
                if v.abs() <= 1e-12 {
                    *v = 0.0;
                }
            }
            if norm2(&r.normal) <= 1e-9 * before {
                let t = r.offset / before;
                let holds = match r.kind {
                    RowKind::Strict => t > 1e-9,
                    _ => t >= -1e-9,
                };
                if !holds {
                    infeasible = true;
                }
                continue;
            }
            rows.push(r.normalized());
        }
        if infeasible {
            rows.push(Halfspace::eq(vec![0.0; n], 1.0));
        }
        rows.sort_by(|a, b| a.canonical_cmp(b));
        let mut out: Vec<Halfspace> = Vec::with_capacity(rows.len());
        for r in &rows {
            if out.iter().any(|o| o.close_to(r, 1e-8)) {
                continue;
            }
            // a·x + b > 0 implies a·x + b ≥ 0.
            let shadowed = r.kind == RowKind::NonStrict
                && rows.iter().any(|o| {
                    o.kind == RowKind::Strict && Halfspace { kind: RowKind::NonStrict, ..o.clone() }.close_to(r, 1e-8)
                });
            if !shadowed {
                out.push(r.clone());
            }
        }
        NncPolyhedron {
            dim: self.dim,
            rows: out,
        }
    }

    fn same_rows(&self, other: &NncPolyhedron, tol: f64) -> bool {
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.close_to(b, tol))
    }

    fn canonical_cmp(&self, other: &NncPolyhedron) -> Ordering {
        for (a, b) in self.rows.iter().zip(&other.rows) {
            let c = a.canonical_cmp(b);
            if c != Ordering::Equal {
                return c;
            }
        }
        self.rows.len().cmp(&other.rows.len())
    }
}

/// In-place reduced row echelon form of `[A | b]` rows over the first `n`
/// columns. Returns the pivot column of each kept row and whether a row
/// `0 = b` with `b != 0` was found.
fn rref(rows: &mut Vec<Vec<f64>>, n: usize) -> (Vec<usize>, bool) {
    const PIV: f64 = 1e-9;
    const INCONSISTENT: f64 = 1e-7;
    for r in rows.iter_mut() {
        let s = r[..n].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if s > 0.0 {
            r.iter_mut().for_each(|v| *v /= s);
        }
    }
    let mut pivots = Vec::new();
    let mut top = 0;
    for c in 0..n {
        if top == rows.len() {
            break;
        }
        let (best, val) = (top..rows.len())
            .map(|i| (i, rows[i][c].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty range");
        if val <= PIV {
            continue;
        }
        rows.swap(top, best);
        let p = rows[top][c];
        rows[top].iter_mut().for_each(|v| *v /= p);
        rows[top][c] = 1.0;
        let prow = rows[top].clone();
        for (i, r) in rows.iter_mut().enumerate() {
            if i != top && r[c] != 0.0 {
                let f = r[c];
                for j in 0..=n {
                    r[j] -= f * prow[j];
                }
                r[c] = 0.0;
            }
        }
        pivots.push(c);
        top += 1;
    }
    let infeasible = rows[top..].iter().any(|r| r[n].abs() > INCONSISTENT);
    rows.truncate(top);
    for r in rows.iter_mut() {
        for v in r.iter_mut() {
            if v.abs() <= 1e-13 {
                *v = 0.0;
            }
        }
    }
    (pivots, infeasible)
}

/// Generator description: `conv(vertices) + cone(rays)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VRep {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
}

/// Finite union of NNC polyhedra of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyUnion {
    pub dim: usize,
    pub pieces: Vec<NncPolyhedron>,
}

impl PolyUnion {
    pub fn new(dim: usize, pieces: Vec<NncPolyhedron>) -> Self {
        PolyUnion { dim, pieces }
    }

    pub fn single(p: NncPolyhedron) -> Self {
        PolyUnion {
            dim: p.dim,
            pieces: vec![p],
        }
    }

    pub fn is_empty_union(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, PolyError> {
        for p in &self.pieces {
            if p.contains(x, tol)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn closure_contains(&self, x: &[f64], tol: f64) -> bool {
        self.pieces.iter().any(|p| p.closure_contains(x, tol))
    }

    /// Drops pieces that are empty.
    pub fn prune_empty(mut self, tol: f64) -> Self {
        self.pieces
            .retain(|p| !crate::qp_kernel::is_empty(p, tol).unwrap_or(true));
        self
    }

    /// Canonical rows, duplicate pieces removed, pieces sorted.
    pub fn canonical(&self) -> PolyUnion {
        let mut pieces: Vec<NncPolyhedron> = self.pieces.iter().map(|p| p.canonical()).collect();
        pieces.sort_by(|a, b| a.canonical_cmp(b));
        let mut out: Vec<NncPolyhedron> = Vec::with_capacity(pieces.len());
        for p in pieces {
            if !out.iter().any(|o| o.same_rows(&p, 1e-8)) {
                out.push(p);
            }
        }
        PolyUnion {
            dim: self.dim,
            pieces: out,
        }
    }
}

/// Open single-row pieces whose union is the complement of `closure(p)`.
pub fn complement_of_closure(p: &NncPolyhedron) -> PolyUnion {
    let mut pieces = Vec::new();
    for r in &p.rows {
        if norm2(&r.normal) <= 1e-12 {
            let infeasible = match r.kind {
                RowKind::Equality => r.offset.abs() > 1e-12,
                _ => r.offset < 0.0,
            };
            if infeasible {
                // closure(p) is empty, so its complement is everything.
                return PolyUnion::single(NncPolyhedron::universe(p.dim));
            }
            continue;
        }
        let neg = Halfspace::gt(r.normal.iter().map(|v| -v).collect(), -r.offset);
        if r.kind == RowKind::Equality {
            pieces.push(NncPolyhedron {
                dim: p.dim,
                rows: vec![Halfspace::gt(r.normal.clone(), r.offset)],
            });
        }
        pieces.push(NncPolyhedron {
            dim: p.dim,
            rows: vec![neg],
        });
    }
    PolyUnion { dim: p.dim, pieces }
}

pub fn intersect(a: &NncPolyhedron, b: &NncPolyhedron) -> Result<NncPolyhedron, PolyError> {
    if a.dim != b.dim {
        return Err(PolyError::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    let mut rows = a.rows.clone();
    rows.extend(b.rows.iter().cloned());
    Ok(NncPolyhedron { dim: a.dim, rows })
}

/// Pairwise intersections with empty products pruned and duplicates removed.
pub fn intersect_unions(a: &PolyUnion, b: &PolyUnion, tol: f64) -> Result<PolyUnion, PolyError> {
    intersect_unions_filtered(a, b, tol, |_| true)
}

/// Like [`intersect_unions`], additionally keeping only products accepted by `keep`.
pub fn intersect_unions_filtered(
    a: &PolyUnion,
    b: &PolyUnion,
    tol: f64,
    keep: impl Fn(&NncPolyhedron) -> bool,
) -> Result<PolyUnion, PolyError> {
    if a.dim != b.dim {
        return Err(PolyError::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    let mut pieces = Vec::new();
    for p in &a.pieces {
        for q in &b.pieces {
            let r = intersect(p, q)?.canonical();
            if keep(&r) && !crate::qp_kernel::is_empty(&r, tol).unwrap_or(true) {
                pieces.push(r);
            }
        }
    }
    Ok(PolyUnion { dim: a.dim, pieces }.canonical())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> NncPolyhedron {
        NncPolyhedron::new(
            2,
            vec![
                Halfspace::ge(vec![1.0, 0.0], 1.0),
                Halfspace::ge(vec![-1.0, 0.0], 1.0),
                Halfspace::gt(vec![0.0, 1.0], 1.0),
                Halfspace::eq(vec![0.0, 0.0], 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn contains_respects_kinds() {
        let p = square();
        assert!(p.contains(&[0.0, 0.0], 1e-9).unwrap());
        assert!(!p.contains(&[0.0, -1.0], 1e-9).unwrap());
        assert!(p.closure_contains(&[0.0, -1.0], 1e-9));
        assert!(p.contains(&[-1.0, 3.0], 1e-9).unwrap());
        assert!(p.contains(&[0.0], 1e-9).is_err());
    }

    #[test]
    fn closure_flips_strict_rows_only() {
        let c = square().closure();
        assert!(c.is_closed());
        assert_eq!(c.rows[3].kind, RowKind::Equality);
        assert_eq!(c.closure(), c);
    }

    #[test]
    fn complement_has_one_piece_per_row_and_two_per_equality() {
        let p = NncPolyhedron::new(
            2,
            vec![
                Halfspace::ge(vec![1.0, 0.0], 0.0),
                Halfspace::eq(vec![0.0, 1.0], 0.0),
            ],
        )
        .unwrap();
        let c = complement_of_closure(&p);
        assert_eq!(c.pieces.len(), 3);
        assert!(c.contains(&[-1.0, 0.0], 1e-9).unwrap());
        assert!(c.contains(&[1.0, 1.0], 1e-9).unwrap());
        assert!(c.contains(&[1.0, -1.0], 1e-9).unwrap());
        assert!(!c.contains(&[1.0, 0.0], 1e-9).unwrap());
        assert!(!c.contains(&[0.0, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn union_intersection_prunes_empty_products() {
        let left = PolyUnion::single(
            NncPolyhedron::new(1, vec![Halfspace::gt(vec![1.0], 0.0)]).unwrap(),
        );
        let right = PolyUnion::new(
            1,
            vec![
                NncPolyhedron::new(1, vec![Halfspace::ge(vec![-1.0], 0.0)]).unwrap(),
                NncPolyhedron::new(1, vec![Halfspace::ge(vec![-1.0], 2.0)]).unwrap(),
            ],
        );
        let u = intersect_unions(&left, &right, 1e-9).unwrap();
        assert_eq!(u.pieces.len(), 1);
        assert!(u.contains(&[1.0], 1e-9).unwrap());
    }

    #[test]
    fn canonical_merges_scaled_duplicates() {
        let p = NncPolyhedron::new(
            1,
            vec![
                Halfspace::ge(vec![2.0], 2.0),
                Halfspace::ge(vec![1.0], 1.0),
                Halfspace::eq(vec![-3.0], 0.0),
                Halfspace::eq(vec![1.0], 0.0),
            ],
        )
        .unwrap();
        let c = p.canonical();
        // x = 0 makes x >= -1 trivially true.
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].kind, RowKind::Equality);
    }
}
