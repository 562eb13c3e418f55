//! Synthetic tracking experiments: trajectories, measurements, noise and
//! error metrics.

mod config;
mod experiment;

use std::collections::BTreeMap;

use nalgebra::{DVector, Point2};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub use config::{parse_method_list, parse_snr_list, ExperimentConfig, Method, StepRule};
pub use experiment::{
    inverse_jacobian, run_experiment, run_experiment_with, AggregateRow, ExperimentResult,
    ExperimentSetup, MethodTrack, RunFailure, RunRecord, Trackers,
};

use crate::error::{Error, Result};
use crate::fem::{ConductivityField, ForwardModel};
use crate::mesh::Mesh;
use crate::protocol::Protocol;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTruth {
    pub elements: Vec<usize>,
    pub centers: Vec<Point2<f64>>,
}

impl TrajectoryTruth {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Random walk over node-sharing element neighbors with a uniformly drawn
/// start element.
pub fn random_walk<R: Rng + ?Sized>(
    mesh: &Mesh,
    frames: usize,
    rule: StepRule,
    rng: &mut R,
) -> Result<TrajectoryTruth> {
    random_walk_on(
        &mesh.element_neighbors(),
        mesh.element_centers(),
        frames,
        rule,
        rng,
    )
}

pub(crate) fn random_walk_on<R: Rng + ?Sized>(
    neighbors: &[Vec<usize>],
    centers: &[Point2<f64>],
    frames: usize,
    rule: StepRule,
    rng: &mut R,
) -> Result<TrajectoryTruth> {
    if frames == 0 {
        return Err(Error::InvalidArgument(
            "trajectory needs at least one frame".into(),
        ));
    }
    if neighbors.is_empty() {
        return Err(Error::InvalidMesh("mesh has no elements".into()));
    }
    let mut current = rng.random_range(0..neighbors.len());
    let mut elements = Vec::with_capacity(frames);
    elements.push(current);
    for _ in 1..frames {
        let nbrs = &neighbors[current];
        current = match rule {
            StepRule::AlwaysMove => *nbrs
                .choose(rng)
                .ok_or_else(|| Error::InvalidMesh(format!("element {current} has no neighbors")))?,
            StepRule::MayStay => {
                let k = rng.random_range(0..=nbrs.len());
                if k == nbrs.len() {
                    current
                } else {
                    nbrs[k]
                }
            }
        };
        elements.push(current);
    }
    let centers = elements.iter().map(|&e| centers[e]).collect();
    Ok(TrajectoryTruth { elements, centers })
}

/// Clean absolute measurements for the empty surface and for a single
/// high-contrast element at each position.
#[derive(Debug, Clone)]
pub struct ForwardBank {
    reference: DVector<f64>,
    occupied: BTreeMap<usize, DVector<f64>>,
}

impl ForwardBank {
    /// Solves the forward problem for the empty surface and for the target at
    /// each element in `elements`.
    pub fn build(
        model: &ForwardModel,
        protocol: &Protocol,
        elements: impl IntoIterator<Item = usize>,
        sigma_baseline: f64,
        sigma_target: f64,
    ) -> Result<Self> {
        let n = model.mesh().element_count();
        let reference =
            model.measurements(&ConductivityField::uniform(n, sigma_baseline)?, protocol)?;
        let mut wanted: Vec<usize> = elements.into_iter().collect();
        wanted.sort_unstable();
        wanted.dedup();
        if let Some(&e) = wanted.iter().find(|&&e| e >= n) {
            return Err(Error::InvalidArgument(format!(
                "element {e} outside mesh of {n}"
            )));
        }
        let occupied = wanted
            .par_iter()
            .map(|&e| {
                let mut values = vec![sigma_baseline; n];
                values[e] = sigma_target;
                let v = model.measurements(&ConductivityField::new(values)?, protocol)?;
                Ok((e, v))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            reference,
            occupied,
        })
    }

    /// Noise-free `v₀`.
    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    /// Absolute measurements with the target at `element`, or `v₀` for an
    /// empty frame.
    pub fn frame(&self, element: Option<usize>) -> Result<&DVector<f64>> {
        match element {
            None => Ok(&self.reference),
            Some(e) => self.occupied.get(&e).ok_or_else(|| {
                Error::InvalidArgument(format!("no forward solution for element {e}"))
            }),
        }
    }
}

/// Clean measurement sequence for a trajectory plus `v₀`.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub reference: DVector<f64>,
    pub frames: Vec<DVector<f64>>,
}

pub fn synthesize(
    model: &ForwardModel,
    protocol: &Protocol,
    truth: &TrajectoryTruth,
    sigma_baseline: f64,
    sigma_target: f64,
) -> Result<Synthesis> {
    let bank = ForwardBank::build(
        model,
        protocol,
        truth.elements.iter().copied(),
        sigma_baseline,
        sigma_target,
    )?;
    synthesize_from(
        &bank,
        &truth.elements.iter().map(|&e| Some(e)).collect::<Vec<_>>(),
    )
}

pub fn synthesize_from(bank: &ForwardBank, occupancy: &[Option<usize>]) -> Result<Synthesis> {
    let frames = occupancy
        .iter()
        .map(|&e| bank.frame(e).cloned())
        .collect::<Result<_>>()?;
    Ok(Synthesis {
        reference: bank.reference().clone(),
        frames,
    })
}

/// `RMS(v) · 10^(−snr/20)`; zero for an infinite SNR.
pub fn noise_std(v: &DVector<f64>, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY || v.is_empty() {
        return 0.0;
    }
    let rms = (v.norm_squared() / v.len() as f64).sqrt();
    rms * 10f64.powf(-snr_db / 20.0)
}

/// Adds i.i.d. zero-mean Gaussian noise scaled to the frame RMS.
pub fn add_noise<R: Rng + ?Sized>(v: &DVector<f64>, snr_db: f64, rng: &mut R) -> DVector<f64> {
    let std = noise_std(v, snr_db);
    if std == 0.0 {
        return v.clone();
    }
    v.map(|x| x + std * rng.sample::<f64, _>(StandardNormal))
}

/// Mean Euclidean distance between paired centers.
pub fn mae(truth: &[Point2<f64>], predicted: &[Point2<f64>]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            what: "predicted trajectory length",
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let total: f64 = truth
        .iter()
        .zip(predicted)
        .map(|(a, b)| (a - b).norm())
        .sum();
    Ok(total / truth.len() as f64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one run: `splitmix64(base ⊕ splitmix64(snr_index << 32 | run))`.
pub fn run_seed(base: u64, snr_index: usize, run: usize) -> u64 {
    splitmix64(base ^ splitmix64(((snr_index as u64) << 32) | run as u64))
}
