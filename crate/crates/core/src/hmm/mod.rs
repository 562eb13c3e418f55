//! Discrete HMM tracker over inverse-mesh elements.
//!
//! The state is the element the target occupies. Emissions follow Bayes'
//! rule with the normalized positive part of the reconstruction as the
//! posterior over states, the stationary distribution as the state prior and a
//! Gaussian mixture as the measurement density:
//!
//! `E[i][j] = x̃_i(j) · p_Z(y(j)) / π_i`, with `x̃(j) = (Hy(j))₊ / ‖(Hy(j))₊‖₁`.

mod gmm;
mod viterbi;

use nalgebra::{DMatrix, DVector, Point2};
use rayon::prelude::*;

pub use gmm::{fit_gmm, GmmDensity, GmmFit, VARIANCE_FLOOR};
pub use viterbi::{viterbi, ViterbiResult};

use crate::error::{Error, Result};
use crate::inverse::{floor_distribution, normalize_positive, Reconstructor, EMISSION_FLOOR};
use crate::markov::MarkovModel;
use crate::mesh::Mesh;

/// Emission likelihoods stored as natural logarithms, states × frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionModel {
    log_e: DMatrix<f64>,
}

impl EmissionModel {
    pub fn from_log(log_e: DMatrix<f64>) -> Self {
        Self { log_e }
    }

    pub fn from_probabilities(e: &DMatrix<f64>) -> Self {
        Self {
            log_e: e.map(f64::ln),
        }
    }

    pub fn log_values(&self) -> &DMatrix<f64> {
        &self.log_e
    }

    pub fn states(&self) -> usize {
        self.log_e.nrows()
    }

    pub fn frames(&self) -> usize {
        self.log_e.ncols()
    }
}

pub fn build_emissions(
    rec: &Reconstructor,
    frames: &[DVector<f64>],
    stationary: &DVector<f64>,
    density: &GmmDensity,
) -> Result<EmissionModel> {
    if stationary.len() != rec.elements() {
        return Err(Error::DimensionMismatch {
            what: "stationary distribution length",
            expected: rec.elements(),
            got: stationary.len(),
        });
    }
    let log_pi = stationary.map(f64::ln);
    let columns: Vec<DVector<f64>> = frames
        .par_iter()
        .map(|y| {
            let x = rec.reconstruct(y)?;
            let posterior = floor_distribution(&normalize_positive(&x), EMISSION_FLOOR);
            let log_pz = density.log_density(y);
            Ok(posterior.map(f64::ln) - &log_pi + DVector::from_element(log_pi.len(), log_pz))
        })
        .collect::<Result<_>>()?;
    let log_e = if columns.is_empty() {
        DMatrix::zeros(rec.elements(), 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    Ok(EmissionModel { log_e })
}

#[derive(Debug, Clone)]
pub struct HmmTrack {
    pub decoded: ViterbiResult,
    pub centers: Vec<Point2<f64>>,
    pub density: GmmDensity,
}

/// Fits the measurement density, builds emissions and decodes. Without an
/// explicit `prior` the stationary distribution is used.
pub fn track_hmm(
    rec: &Reconstructor,
    frames: &[DVector<f64>],
    markov: &MarkovModel,
    mesh: &Mesh,
    prior: Option<&DVector<f64>>,
    gmm_components: usize,
    seed: u64,
) -> Result<HmmTrack> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to track".into()));
    }
    let density = fit_gmm(frames, gmm_components, seed)?.density;
    let emissions = build_emissions(rec, frames, markov.stationary(), &density)?;
    let prior = prior.unwrap_or(markov.stationary());
    let decoded = viterbi(markov.transition(), &emissions, prior)?;
    let centers = decoded
        .path
        .iter()
        .map(|&e| mesh.element_centers()[e])
        .collect();
    Ok(HmmTrack {
        decoded,
        centers,
        density,
    })
}
