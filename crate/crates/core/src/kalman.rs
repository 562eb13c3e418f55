//! Linear-Gaussian tracking of the conductivity-difference image.
//!
//! State model `x(t+1) = A x(t) + n_x`, observation `y(t) = J x(t) + n_y`
//! with `A` the motion transition matrix and unit noise covariances.

use nalgebra::{Cholesky, DMatrix, DVector, Point2};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Empty-surface prior: zero mean, identity covariance.
pub fn kf_init(n: usize) -> KalmanState {
    KalmanState {
        mean: DVector::zeros(n),
        covariance: DMatrix::identity(n, n),
    }
}

#[derive(Debug, Clone)]
pub struct KalmanModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
}

impl KalmanModel {
    /// `Σx = I` and `Σy = I` with the given transition and measurement count.
    pub fn with_unit_noise(transition: DMatrix<f64>, measurements: usize) -> Self {
        let n = transition.nrows();
        Self {
            transition,
            process_noise: DMatrix::identity(n, n),
            measurement_noise: DMatrix::identity(measurements, measurements),
        }
    }

    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let a = &self.transition;
        let mean = a * &state.mean;
        let covariance = a * &state.covariance * a.transpose() + &self.process_noise;
        KalmanState { mean, covariance }
    }

    pub fn update(
        &self,
        prior: &KalmanState,
        y: &DVector<f64>,
        j: &DMatrix<f64>,
    ) -> Result<KalmanState> {
        let n = prior.mean.len();
        if j.ncols() != n || j.nrows() != y.len() || self.measurement_noise.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                what: "observation matrix",
                expected: n,
                got: j.ncols(),
            });
        }
        let jc = j * &prior.covariance;
        let innovation_cov = &jc * j.transpose() + &self.measurement_noise;
        let chol = Cholesky::new(innovation_cov).ok_or_else(|| {
            Error::NotPositiveDefinite("innovation covariance is not invertible".into())
        })?;
        // Kᵀ = S⁻¹ J C⁻ since S and C⁻ are symmetric.
        let gain_t = chol.solve(&jc);
        let innovation = y - j * &prior.mean;
        let mean = &prior.mean + gain_t.tr_mul(&innovation);
        let mut covariance = &prior.covariance - gain_t.tr_mul(&jc);
        debug_assert!(
            (&covariance - covariance.transpose()).amax() <= 1e-10 * covariance.amax().max(1.0),
            "covariance update lost symmetry"
        );
        symmetrize(&mut covariance);
        Ok(KalmanState { mean, covariance })
    }

    /// Predict then update.
    pub fn step(
        &self,
        state: &KalmanState,
        y: &DVector<f64>,
        j: &DMatrix<f64>,
    ) -> Result<KalmanState> {
        let prior = self.predict(state);
        self.update(&prior, y, j)
    }
}

pub fn kf_step(
    model: &KalmanModel,
    state: &KalmanState,
    y: &DVector<f64>,
    j: &DMatrix<f64>,
) -> Result<KalmanState> {
    model.step(state, y, j)
}

fn symmetrize(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for k in (i + 1)..n {
            let v = 0.5 * (c[(i, k)] + c[(k, i)]);
            c[(i, k)] = v;
            c[(k, i)] = v;
        }
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Element with the highest value and its centroid.
pub fn locate(values: &[f64], mesh: &Mesh) -> (usize, Point2<f64>) {
    let e = argmax(values);
    (e, mesh.element_centers()[e])
}

pub fn kf_locate(state: &KalmanState, mesh: &Mesh) -> (usize, Point2<f64>) {
    locate(state.mean.as_slice(), mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_zero_identity() {
        let s = kf_init(152);
        assert_eq!(s.mean, DVector::zeros(152));
        assert_eq!(s.covariance, DMatrix::identity(152, 152));
        assert_eq!(kf_init(1).covariance[(0, 0)], 1.0);
        assert_eq!(kf_init(5), kf_init(5));
    }

    #[test]
    fn scalar_posterior() {
        let model = KalmanModel::with_unit_noise(DMatrix::identity(1, 1), 1);
        let j = DMatrix::identity(1, 1);
        let s = model
            .step(&kf_init(1), &DVector::from_element(1, 1.0), &j)
            .unwrap();
        assert!((s.mean[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.covariance[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_innovation_keeps_prediction() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75]);
        let model = KalmanModel::with_unit_noise(a, 3);
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let state = KalmanState {
            mean: DVector::from_vec(vec![0.3, -0.2]),
            covariance: DMatrix::identity(2, 2),
        };
        let prior = model.predict(&state);
        let y = &j * &prior.mean;
        let post = model.update(&prior, &y, &j).unwrap();
        assert!((post.mean - prior.mean).amax() < 1e-15);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let n = 6;
        let a = DMatrix::from_fn(n, n, |i, k| {
            if i == k {
                0.5
            } else if i.abs_diff(k) == 1 {
                0.25
            } else {
                0.0
            }
        });
        let model = KalmanModel::with_unit_noise(a, 4);
        let j = DMatrix::from_fn(4, n, |i, k| ((i * 7 + k * 3) % 5) as f64 - 2.0);
        let mut s = kf_init(n);
        for t in 0..20 {
            let y = DVector::from_fn(4, |i, _| ((t + i) as f64).sin());
            s = model.step(&s, &y, &j).unwrap();
            assert_eq!(s.covariance, s.covariance.transpose());
            let eig = s.covariance.clone().symmetric_eigenvalues();
            assert!(eig.min() >= -1e-10);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let model = KalmanModel::with_unit_noise(DMatrix::identity(2, 2), 3);
        let j = DMatrix::zeros(3, 3);
        assert!(model.step(&kf_init(2), &DVector::zeros(3), &j).is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[-1.0, 2.0, 2.0]), 1);
    }
}
