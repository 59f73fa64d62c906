//! Double-description conversions between halfspace and generator form.

use super::{Halfspace, NncPolyhedron, PolyError, RowKind, VRep};
use nalgebra::DMatrix;

use crate::linalg::{dot, norm2, null_space};

const ZERO_TOL: f64 = 1e-9;
const MERGE_TOL: f64 = 1e-8;

#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64).max(1)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn and(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a & b).collect())
    }
    fn subset_of(&self, o: &Bits) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| a & !b == 0)
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

struct Ray {
    v: Vec<f64>,
    zero: Bits,
}

/// Generators of the cone `{v : h·v >= 0 (or = 0) for every row}`.
pub(crate) struct Cone {
    pub lines: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm2(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Incremental double description. Rows are processed in the given order.
pub(crate) fn dd_cone(dim: usize, rows: &[(Vec<f64>, bool)]) -> Cone {
    let nrows = rows.len();
    let mut lines: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rays: Vec<Ray> = Vec::new();

    for (k, (h_raw, is_eq)) in rows.iter().enumerate() {
        let hn = norm2(h_raw);
        if hn <= 1e-14 {
            continue;
        }
        let h: Vec<f64> = h_raw.iter().map(|v| v / hn).collect();

        let vals: Vec<f64> = lines.iter().map(|l| dot(&h, l)).collect();
        let pivot = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > ZERO_TOL)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i);

        if let Some(p) = pivot {
            let mut lp = lines.remove(p);
            let mut sp = vals[p];
            if sp < 0.0 {
                lp.iter_mut().for_each(|v| *v = -*v);
                sp = -sp;
            }
            let rest: Vec<f64> = vals
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != p)
                .map(|(_, v)| *v)
                .collect();
            for (l, s) in lines.iter_mut().zip(rest) {
                axpy(l, -s / sp, &lp);
                *l = unit(std::mem::take(l));
            }
            for r in rays.iter_mut() {
                let s = dot(&h, &r.v);
                axpy(&mut r.v, -s / sp, &lp);
                r.v = unit(std::mem::take(&mut r.v));
                r.zero.set(k);
            }
            if !is_eq {
                let mut zero = Bits::new(nrows);
                for j in 0..k {
                    zero.set(j);
                }
                rays.push(Ray { v: unit(lp), zero });
            }
            continue;
        }

        let s: Vec<f64> = rays.iter().map(|r| dot(&h, &r.v)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| s[i] > ZERO_TOL).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| s[i] < -ZERO_TOL).collect();
        if neg.is_empty() && (!is_eq || pos.is_empty()) {
            for (i, r) in rays.iter_mut().enumerate() {
                if s[i].abs() <= ZERO_TOL {
                    r.zero.set(k);
                }
            }
            continue;
        }

        let min_common = (dim - lines.len()).saturating_sub(2);
        let mut created: Vec<Ray> = Vec::new();
        for &p in &pos {
            for &n in &neg {
                let common = rays[p].zero.and(&rays[n].zero);
                if common.count() < min_common {
                    continue;
                }
                let adjacent = (0..rays.len())
                    .all(|r| r == p || r == n || !common.subset_of(&rays[r].zero));
                if !adjacent {
                    continue;
                }
                let mut v: Vec<f64> = rays[n].v.iter().map(|x| x * s[p]).collect();
                axpy(&mut v, -s[n], &rays[p].v);
                let v = unit(v);
                if norm2(&v) == 0.0 {
                    continue;
                }
                let mut zero = common;
                zero.set(k);
                created.push(Ray { v, zero });
            }
        }

        let mut next: Vec<Ray> = Vec::with_capacity(rays.len() + created.len());
        for (i, mut r) in rays.into_iter().enumerate() {
            if s[i].abs() <= ZERO_TOL {
                r.zero.set(k);
                next.push(r);
            } else if s[i] > 0.0 && !is_eq {
                next.push(r);
            }
        }
        for r in created {
            let dup = next
                .iter()
                .any(|o| o.v.iter().zip(&r.v).all(|(a, b)| (a - b).abs() <= MERGE_TOL));
            if !dup {
                next.push(r);
            }
        }
        rays = next;
    }

    Cone {
        lines,
        rays: rays.into_iter().map(|r| r.v).collect(),
    }
}

/// Vertices and rays of `closure(p)`. Lines are returned as opposite ray pairs.
pub fn vertex_enumerate(p: &NncPolyhedron) -> Result<VRep, PolyError> {
    let n = p.dim;
    let mut eqs: Vec<(Vec<f64>, bool)> = Vec::new();
    let mut ineqs: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in &p.rows {
        let mut h = r.normal.clone();
        h.push(r.offset);
        let hn = norm2(&h);
        if hn <= 1e-14 {
            continue;
        }
        let weight = norm2(&r.normal) / hn;
        if r.kind == RowKind::Equality {
            eqs.push((h, true));
        } else {
            ineqs.push((weight, h));
        }
    }
    ineqs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut t_row = vec![0.0; n + 1];
    t_row[n] = 1.0;
    let mut rows = eqs;
    rows.push((t_row, false));
    rows.extend(ineqs.into_iter().map(|(_, h)| (h, false)));

    let cone = dd_cone(n + 1, &rows);
    let mut vertices = Vec::new();
    let mut rays = Vec::new();
    for l in &cone.lines {
        let x: Vec<f64> = l[..n].to_vec();
        if norm2(&x) > ZERO_TOL {
            let x = unit(x);
            rays.push(x.iter().map(|v| -v).collect());
            rays.push(x);
        }
    }
    for r in &cone.rays {
        let t = r[n];
        if t > ZERO_TOL {
            vertices.push(r[..n].iter().map(|v| v / t).collect());
        } else {
            let x = r[..n].to_vec();
            if norm2(&x) > ZERO_TOL {
                rays.push(unit(x));
            }
        }
    }
    if vertices.is_empty() {
        return Err(PolyError::Empty);
    }
    Ok(VRep {
        dim: n,
        vertices,
        rays,
    })
}

/// Coordinate projection onto `keep` (in the given order).
pub fn project(v: &VRep, keep: &[usize]) -> Result<VRep, PolyError> {
    if let Some(&index) = keep.iter().find(|&&i| i >= v.dim) {
        return Err(PolyError::BadIndex { index, dim: v.dim });
    }
    let pick = |x: &Vec<f64>| -> Vec<f64> { keep.iter().map(|&i| x[i]).collect() };
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for x in v.vertices.iter().map(pick) {
        if !vertices
            .iter()
            .any(|o| o.iter().zip(&x).all(|(a, b)| (a - b).abs() <= MERGE_TOL))
        {
            vertices.push(x);
        }
    }
    let mut rays: Vec<Vec<f64>> = Vec::new();
    for r in v.rays.iter().map(pick) {
        if norm2(&r) <= ZERO_TOL {
            continue;
        }
        let r = unit(r);
        if !rays
            .iter()
            .any(|o| o.iter().zip(&r).all(|(a, b)| (a - b).abs() <= MERGE_TOL))
        {
            rays.push(r);
        }
    }
    Ok(VRep {
        dim: keep.len(),
        vertices,
        rays,
    })
}

/// Closed halfspace description of `conv(vertices) + cone(rays)`.
pub fn hrep_from_vrep(v: &VRep) -> Result<NncPolyhedron, PolyError> {
    if v.vertices.is_empty() {
        return Err(PolyError::Empty);
    }
    let n = v.dim;
    let mut rows: Vec<(Vec<f64>, bool)> = Vec::new();
    for x in &v.vertices {
        let mut h = x.clone();
        h.push(1.0);
        rows.push((h, false));
    }
    for r in &v.rays {
        let mut h = r.clone();
        h.push(0.0);
        rows.push((h, false));
    }
    let cone = dd_cone(n + 1, &rows);

    // Affine hull from an SVD of the generator directions, which is far more
    // accurate than the equalities recovered by the dual pass.
    let v0 = &v.vertices[0];
    let mut dirs: Vec<Vec<f64>> = v.vertices[1..]
        .iter()
        .map(|x| x.iter().zip(v0).map(|(a, b)| a - b).collect())
        .collect();
    dirs.extend(v.rays.iter().cloned());
    let span = if dirs.is_empty() {
        DMatrix::zeros(0, n)
    } else {
        DMatrix::from_fn(dirs.len(), n, |i, j| dirs[i][j])
    };
    let hull = null_space(&span, 1e-9);
    let eq_normals: Vec<Vec<f64>> = (0..hull.ncols())
        .map(|c| hull.column(c).iter().copied().collect())
        .collect();

    let clean = |v: f64| if v.abs() <= 1e-12 { 0.0 } else { v };
    let mut out = Vec::new();
    for a in &eq_normals {
        let off = -v.vertices.iter().map(|x| dot(a, x)).sum::<f64>() / v.vertices.len() as f64;
        out.push(Halfspace::eq(a.iter().map(|x| clean(*x)).collect(), clean(off)).normalized());
    }
    for r in &cone.rays {
        let mut a: Vec<f64> = r[..n].to_vec();
        for e in &eq_normals {
            let d = dot(&a, e);
            axpy(&mut a, -d, e);
        }
        if norm2(&a) <= ZERO_TOL {
            continue;
        }
        let a = unit(a);
        if v.rays.iter().any(|d| dot(&a, d) < -1e-7) {
            continue;
        }
        let off = -v
            .vertices
            .iter()
            .map(|x| dot(&a, x))
            .fold(f64::INFINITY, f64::min);
        out.push(Halfspace::ge(a.iter().map(|x| clean(*x)).collect(), clean(off)).normalized());
    }
    Ok(NncPolyhedron { dim: n, rows: out })
}
