#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qpnet::{Halfspace, NncPolyhedron, QuadCost};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

/// `BᵀB + ridge·I` with Gaussian `B` of rank at most `rank`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(rank, n, |_, _| normal(rng));
    b.transpose() * b + DMatrix::identity(n, n) * ridge
}

pub fn random_cost(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> QuadCost {
    let rank = rng.gen_range(1..=n);
    let q = random_psd(rng, n, rank, ridge);
    QuadCost::new(q, DVector::from_vec(normal_vec(rng, n))).unwrap()
}

/// `|x_j| <= bound` as `2n` closed rows.
pub fn box_rows(n: usize, bound: f64) -> Vec<Halfspace> {
    let mut rows = Vec::new();
    for j in 0..n {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; n];
            a[j] = s;
            rows.push(Halfspace::ge(a, bound));
        }
    }
    rows
}

/// Random closed rows `a·x + b >= 0` with `b > 0`, so the origin is interior.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Halfspace> {
    (0..count)
        .map(|_| Halfspace::ge(normal_vec(rng, n), rng.gen_range(0.2..1.5)))
        .collect()
}

pub fn random_bounded(rng: &mut ChaCha8Rng, n: usize, extra: usize, bound: f64) -> NncPolyhedron {
    let mut rows = random_rows(rng, n, extra);
    rows.extend(box_rows(n, bound));
    NncPolyhedron::new(n, rows).unwrap()
}

/// Uniform point of the unit ball in `R^n`.
pub fn unit_ball(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}
