#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Exhaustive search over all state sequences. Sequences are visited in
/// lexicographic order and only a strictly better score replaces the best.
pub fn brute_force_decode(
    p: &DMatrix<f64>,
    log_e: &DMatrix<f64>,
    prior: &DVector<f64>,
) -> (Vec<usize>, f64) {
    let (m, t_len) = log_e.shape();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let total = m.pow(t_len as u32);
    for code in 0..total {
        let mut path = vec![0; t_len];
        let mut c = code;
        for t in (0..t_len).rev() {
            path[t] = c % m;
            c /= m;
        }
        let mut score = prior[path[0]].ln() + log_e[(path[0], 0)];
        for t in 1..t_len {
            score += p[(path[t - 1], path[t])].ln() + log_e[(path[t], t)];
        }
        if score > best.1 {
            best = (path, score);
        }
    }
    best
}

pub fn random_stochastic_rows<R: Rng>(rng: &mut R, m: usize, sparsity: f64) -> DMatrix<f64> {
    let mut p = DMatrix::from_fn(m, m, |i, j| {
        if i == j || rng.random::<f64>() >= sparsity {
            rng.random_range(0.05..1.0)
        } else {
            0.0
        }
    });
    for mut row in p.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    p
}

pub fn random_distribution<R: Rng>(rng: &mut R, m: usize) -> DVector<f64> {
    let v = DVector::from_fn(m, |_, _| rng.random_range(0.05..1.0));
    let s = v.sum();
    v / s
}

pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.5
}
