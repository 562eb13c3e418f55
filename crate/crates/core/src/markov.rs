//! Random-walk motion model over mesh elements.
//!
//! `P = (D + I)⁻¹ (S + I)`: from element `i` the target stays put or moves to
//! any node-sharing neighbor with equal probability `1 / (d_i + 1)`. Rows of
//! `P` are the outgoing distributions, `P[i][j] = Pr(next = j | now = i)`.
//! Since `S + I` is symmetric the chain is reversible with
//! `π_i ∝ d_i + 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::connected_components;

#[derive(Debug, Clone)]
pub struct MarkovModel {
    adjacency: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    transition: DMatrix<f64>,
    stationary: DVector<f64>,
}

impl MarkovModel {
    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Row-stochastic transition matrix.
    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    pub fn states(&self) -> usize {
        self.degrees.len()
    }

    /// Second largest eigenvalue modulus, via the symmetric similarity
    /// transform `(D+I)^{-1/2} (S+I) (D+I)^{-1/2}`.
    pub fn second_eigenvalue_modulus(&self) -> f64 {
        let n = self.states();
        if n < 2 {
            return 0.0;
        }
        let scale: Vec<f64> = self
            .degrees
            .iter()
            .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
            .collect();
        let sym = DMatrix::from_fn(n, n, |i, j| {
            let s = if i == j { 1.0 } else { self.adjacency[(i, j)] };
            s * scale[i] * scale[j]
        });
        let mut moduli: Vec<f64> = sym
            .symmetric_eigenvalues()
            .iter()
            .map(|v| v.abs())
            .collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        moduli[1]
    }
}

/// Builds the motion model from a symmetric 0/1 adjacency matrix with zero
/// diagonal over a connected graph.
pub fn build_markov(adjacency: &DMatrix<f64>) -> Result<MarkovModel> {
    let n = adjacency.nrows();
    if n == 0 || adjacency.ncols() != n {
        return Err(Error::InvalidArgument(
            "adjacency must be a non-empty square matrix".into(),
        ));
    }
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "adjacency has a self-loop at {i}"
            )));
        }
        for j in 0..n {
            let v = adjacency[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "adjacency entry ({i}, {j}) = {v} is not 0/1"
                )));
            }
            if v != adjacency[(j, i)] {
                return Err(Error::InvalidArgument(format!(
                    "adjacency is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| adjacency[(i, j)] == 1.0).collect())
        .collect();
    let components = connected_components(&neighbors);
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    // D[i][i] is the column sum of S; equal to the row sum since S is symmetric.
    let degrees: Vec<usize> = (0..n)
        .map(|i| adjacency.column(i).iter().filter(|&&v| v == 1.0).count())
        .collect();
    let transition = DMatrix::from_fn(n, n, |i, j| {
        if i == j || adjacency[(i, j)] == 1.0 {
            1.0 / (degrees[i] + 1) as f64
        } else {
            0.0
        }
    });
    let total: usize = degrees.iter().map(|d| d + 1).sum();
    let stationary =
        DVector::from_iterator(n, degrees.iter().map(|&d| (d + 1) as f64 / total as f64));
    Ok(MarkovModel {
        adjacency: adjacency.clone(),
        neighbors,
        degrees,
        transition,
        stationary,
    })
}

/// Smallest `T ≥ 1` with `|λ₂|^T ≤ threshold`, where `λ₂` is the eigenvalue of
/// `transition` with the second largest modulus.
pub fn mixing_frames(transition: &DMatrix<f64>, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must lie in (0, 1)"
        )));
    }
    let n = transition.nrows();
    if n < 2 {
        return Ok(1);
    }
    let mut moduli: Vec<f64> = transition
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(frames_for_modulus(moduli[1], threshold))
}

pub(crate) fn frames_for_modulus(lambda2: f64, threshold: f64) -> usize {
    if lambda2 <= threshold {
        return 1;
    }
    if lambda2 >= 1.0 {
        return usize::MAX;
    }
    let mut t = (threshold.ln() / lambda2.ln()).ceil().max(1.0) as usize;
    // Guard against rounding in the logarithms.
    while t > 1 && lambda2.powi(t as i32 - 1) <= threshold {
        t -= 1;
    }
    while lambda2.powi(t as i32) > threshold {
        t += 1;
    }
    t
}
