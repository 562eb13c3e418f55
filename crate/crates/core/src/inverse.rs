//! One-step regularized difference reconstruction.
//!
//! `x̂ = (JᵀJ + λ·diag(JᵀJ)^p)⁻¹ Jᵀ y`, with `p = 1` giving the NOSER prior
//! and `p = 0.5` the default compromise between boundary and center noise.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_PRIOR_EXPONENT: f64 = 0.5;
/// Lower bound applied to normalized emission probabilities.
pub const EMISSION_FLOOR: f64 = 1e-12;

/// Difference measurement `y = v - v₀` at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceFrame {
    pub t: usize,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Reconstructor {
    h: DMatrix<f64>,
    lambda: f64,
    exponent: f64,
    prior_weights: DVector<f64>,
}

impl Reconstructor {
    /// Factorizes the regularized normal matrix once and stores `H`.
    pub fn build(jacobian: &DMatrix<f64>, lambda: f64, exponent: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(0.0..=1.0).contains(&exponent) {
            return Err(Error::InvalidArgument(format!(
                "prior exponent {exponent} outside [0, 1]"
            )));
        }
        let jt = jacobian.transpose();
        let mut normal = &jt * jacobian;
        let prior_weights = normal.diagonal().map(|d| d.powf(exponent));
        for i in 0..normal.nrows() {
            normal[(i, i)] += lambda * prior_weights[i];
        }
        let chol = Cholesky::new(normal).ok_or_else(|| {
            Error::NotPositiveDefinite("regularized normal matrix is not positive definite".into())
        })?;
        let h = chol.solve(&jt);
        Ok(Self {
            h,
            lambda,
            exponent,
            prior_weights,
        })
    }

    /// The `n_N × n_M` reconstruction operator.
    pub fn operator(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Diagonal of the regularization matrix, `diag(JᵀJ)^p`.
    pub fn prior_weights(&self) -> &DVector<f64> {
        &self.prior_weights
    }

    pub fn elements(&self) -> usize {
        self.h.nrows()
    }

    pub fn measurements(&self) -> usize {
        self.h.ncols()
    }

    pub fn reconstruct(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.h.ncols() {
            return Err(Error::DimensionMismatch {
                what: "difference frame length",
                expected: self.h.ncols(),
                got: y.len(),
            });
        }
        Ok(&self.h * y)
    }
}

pub fn build_reconstructor(
    jacobian: &DMatrix<f64>,
    lambda: f64,
    exponent: f64,
) -> Result<Reconstructor> {
    Reconstructor::build(jacobian, lambda, exponent)
}

/// `x̂₊ / ‖x̂₊‖₁`, or the uniform distribution when no entry is positive.
pub fn normalize_positive(x: &DVector<f64>) -> DVector<f64> {
    let pos = x.map(|v| v.max(0.0));
    let total = pos.sum();
    if total > 0.0 && total.is_finite() {
        pos / total
    } else {
        DVector::from_element(x.len(), 1.0 / x.len() as f64)
    }
}

/// Clamps every probability to at least `floor` and renormalizes.
pub fn floor_distribution(p: &DVector<f64>, floor: f64) -> DVector<f64> {
    let clamped = p.map(|v| v.max(floor));
    let total = clamped.sum();
    clamped / total
}

/// Writes reconstructed frames as CSV rows: frame index, then one value per element.
pub fn write_frames_csv<W: Write>(frames: &[(usize, DVector<f64>)], mut w: W) -> Result<()> {
    for (t, x) in frames {
        write!(w, "{t}")?;
        for v in x.iter() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
