use std::io::Write;

use log::{info, warn};
use nalgebra::{DMatrix, DVector, Point2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    add_noise, mae, random_walk_on, run_seed, ExperimentConfig, ForwardBank, Method,
    TrajectoryTruth,
};
use crate::error::{Error, Result};
use crate::fem::{compute_jacobian, ConductivityField, ForwardModel};
use crate::hmm::track_hmm;
use crate::inverse::Reconstructor;
use crate::kalman::{kf_init, kf_locate, locate, KalmanModel};
use crate::markov::{build_markov, MarkovModel};
use crate::mesh::{element_adjacency, generate_disk_mesh, place_electrodes, Mesh};
use crate::protocol::Protocol;

const WALK_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// Inverse-mesh operators used by the three trackers.
#[derive(Debug, Clone)]
pub struct Trackers {
    pub mesh: Mesh,
    pub protocol: Protocol,
    pub jacobian: DMatrix<f64>,
    pub reconstructor: Reconstructor,
    pub markov: MarkovModel,
    pub kalman: KalmanModel,
}

fn forward_model(mesh: &Mesh, config: &ExperimentConfig) -> Result<ForwardModel> {
    let layout = place_electrodes(mesh, config.electrodes, config.coverage)?
        .with_contact_impedance(config.contact_impedance)?;
    ForwardModel::new(mesh, &layout)
}

/// Sensitivity matrix on the inverse mesh at the homogeneous baseline.
pub fn inverse_jacobian(config: &ExperimentConfig) -> Result<DMatrix<f64>> {
    let mesh = generate_disk_mesh(config.inverse_elements, config.mesh_seed)?;
    let protocol = Protocol::opposite(config.electrodes)?;
    let model = forward_model(&mesh, config)?;
    let sigma0 = ConductivityField::uniform(mesh.element_count(), config.sigma_baseline)?;
    Ok(compute_jacobian(&model, &protocol, &sigma0)?.matrix)
}

impl Trackers {
    /// A precomputed inverse-mesh Jacobian is used as given when its shape
    /// fits; otherwise one is computed.
    pub fn build(config: &ExperimentConfig, jacobian: Option<DMatrix<f64>>) -> Result<Self> {
        config.validate()?;
        let mesh = generate_disk_mesh(config.inverse_elements, config.mesh_seed)?;
        let protocol = Protocol::opposite(config.electrodes)?;
        let jacobian = match jacobian {
            Some(j) => {
                if j.shape() != (protocol.n_m(), mesh.element_count()) {
                    return Err(Error::DimensionMismatch {
                        what: "cached jacobian columns",
                        expected: mesh.element_count(),
                        got: j.ncols(),
                    });
                }
                j
            }
            None => {
                let model = forward_model(&mesh, config)?;
                let sigma0 =
                    ConductivityField::uniform(mesh.element_count(), config.sigma_baseline)?;
                compute_jacobian(&model, &protocol, &sigma0)?.matrix
            }
        };
        let reconstructor = Reconstructor::build(&jacobian, config.lambda, config.prior_exponent)?;
        let markov = build_markov(&element_adjacency(&mesh))?;
        let kalman = KalmanModel::with_unit_noise(markov.transition().clone(), protocol.n_m());
        Ok(Self {
            mesh,
            protocol,
            jacobian,
            reconstructor,
            markov,
            kalman,
        })
    }

    fn check_frames(&self, frames: &[DVector<f64>]) -> Result<()> {
        if let Some(y) = frames.iter().find(|y| y.len() != self.protocol.n_m()) {
            return Err(Error::DimensionMismatch {
                what: "measurements per frame",
                expected: self.protocol.n_m(),
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Per-frame argmax of the one-step reconstruction.
    pub fn track_jac(&self, frames: &[DVector<f64>]) -> Result<Vec<(usize, Point2<f64>)>> {
        self.check_frames(frames)?;
        frames
            .iter()
            .map(|y| {
                let x = self.reconstructor.reconstruct(y)?;
                Ok(locate(x.as_slice(), &self.mesh))
            })
            .collect()
    }

    pub fn track_kf(&self, frames: &[DVector<f64>]) -> Result<Vec<(usize, Point2<f64>)>> {
        self.check_frames(frames)?;
        let mut state = kf_init(self.mesh.element_count());
        let mut out = Vec::with_capacity(frames.len());
        for y in frames {
            state = self.kalman.step(&state, y, &self.jacobian)?;
            out.push(kf_locate(&state, &self.mesh));
        }
        Ok(out)
    }

    pub fn track_hmm(
        &self,
        frames: &[DVector<f64>],
        gmm_components: usize,
        seed: u64,
    ) -> Result<Vec<(usize, Point2<f64>)>> {
        self.check_frames(frames)?;
        let track = track_hmm(
            &self.reconstructor,
            frames,
            &self.markov,
            &self.mesh,
            None,
            gmm_components,
            seed,
        )?;
        Ok(track.decoded.path.into_iter().zip(track.centers).collect())
    }

    pub fn track(
        &self,
        method: Method,
        frames: &[DVector<f64>],
        gmm_components: usize,
        seed: u64,
    ) -> Result<Vec<(usize, Point2<f64>)>> {
        match method {
            Method::Jac => self.track_jac(frames),
            Method::Kf => self.track_kf(frames),
            Method::Hmm => self.track_hmm(frames, gmm_components, seed),
        }
    }
}

/// Trackers plus the forward-mesh data that generates measurements.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub forward_mesh: Mesh,
    pub bank: ForwardBank,
    pub trackers: Trackers,
    forward_neighbors: Vec<Vec<usize>>,
}

impl ExperimentSetup {
    pub fn build(config: &ExperimentConfig, jacobian: Option<DMatrix<f64>>) -> Result<Self> {
        let trackers = Trackers::build(config, jacobian)?;
        let forward_mesh = generate_disk_mesh(config.forward_elements, config.mesh_seed)?;
        info!(
            "forward mesh {} elements, inverse mesh {} elements",
            forward_mesh.element_count(),
            trackers.mesh.element_count()
        );
        let fwd_model = forward_model(&forward_mesh, config)?;
        let bank = ForwardBank::build(
            &fwd_model,
            &trackers.protocol,
            0..forward_mesh.element_count(),
            config.sigma_baseline,
            config.sigma_target,
        )?;
        let forward_neighbors = forward_mesh.element_neighbors();
        Ok(Self {
            forward_mesh,
            bank,
            trackers,
            forward_neighbors,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrack {
    pub method: Method,
    pub elements: Vec<usize>,
    pub centers: Vec<Point2<f64>>,
    pub errors: Vec<f64>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub snr_index: usize,
    pub run: usize,
    pub seed: u64,
    pub truth: TrajectoryTruth,
    pub tracks: Vec<MethodTrack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub snr_index: usize,
    pub run: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub snr_db: f64,
    pub mean_mae: f64,
    pub median_mae: f64,
    pub q1: f64,
    pub q3: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    /// Successful runs ordered by (SNR index, run).
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl ExperimentResult {
    /// Per-run MAE values for one method at one SNR, in run order.
    pub fn run_maes(&self, method: Method, snr_index: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.snr_index == snr_index)
            .flat_map(|r| {
                r.tracks
                    .iter()
                    .filter(|t| t.method == method)
                    .map(|t| t.mae)
            })
            .collect()
    }

    pub fn mean_mae(&self, method: Method, snr_index: usize) -> Option<f64> {
        let v = self.run_maes(method, snr_index);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Summary statistics ordered by SNR, then method.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut rows = Vec::new();
        for (si, &snr) in self.snr_db.iter().enumerate() {
            for &method in &self.methods {
                let mut v = self.run_maes(method, si);
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                rows.push(AggregateRow {
                    method,
                    snr_db: snr,
                    mean_mae: v.iter().sum::<f64>() / v.len() as f64,
                    median_mae: quantile(&v, 0.5),
                    q1: quantile(&v, 0.25),
                    q3: quantile(&v, 0.75),
                    n_runs: v.len(),
                });
            }
        }
        rows
    }

    pub fn write_results_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,snr_db,run,frame,true_x,true_y,pred_x,pred_y,err")?;
        for r in &self.runs {
            let snr = self.snr_db[r.snr_index];
            for t in &r.tracks {
                for (f, ((truth, pred), err)) in r
                    .truth
                    .centers
                    .iter()
                    .zip(&t.centers)
                    .zip(&t.errors)
                    .enumerate()
                {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        t.method, snr, r.run, f, truth.x, truth.y, pred.x, pred.y, err
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn write_aggregate_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,snr_db,mean_mae,median_mae,q1,q3,n_runs")?;
        for a in self.aggregate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                a.method, a.snr_db, a.mean_mae, a.median_mae, a.q1, a.q3, a.n_runs
            )?;
        }
        Ok(())
    }
}

fn run_one(
    setup: &ExperimentSetup,
    config: &ExperimentConfig,
    snr_index: usize,
    run: usize,
) -> Result<RunRecord> {
    let seed = run_seed(config.seed, snr_index, run);
    let mut walk_rng = ChaCha8Rng::seed_from_u64(seed);
    walk_rng.set_stream(WALK_STREAM);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(NOISE_STREAM);

    let truth = random_walk_on(
        &setup.forward_neighbors,
        setup.forward_mesh.element_centers(),
        config.frames,
        config.step_rule,
        &mut walk_rng,
    )?;
    let snr = config.snr_db[snr_index];
    let v0 = setup.bank.reference();
    let frames: Vec<DVector<f64>> = truth
        .elements
        .iter()
        .map(|&e| Ok(add_noise(setup.bank.frame(Some(e))?, snr, &mut noise_rng) - v0))
        .collect::<Result<_>>()?;

    let mut tracks = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let located = setup
            .trackers
            .track(method, &frames, config.gmm_components, seed)?;
        let (elements, centers): (Vec<usize>, Vec<Point2<f64>>) = located.into_iter().unzip();
        let errors = truth
            .centers
            .iter()
            .zip(&centers)
            .map(|(a, b)| (a - b).norm())
            .collect();
        let mae = mae(&truth.centers, &centers)?;
        tracks.push(MethodTrack {
            method,
            elements,
            centers,
            errors,
            mae,
        });
    }
    Ok(RunRecord {
        snr_index,
        run,
        seed,
        truth,
        tracks,
    })
}

/// Runs every (SNR, run) pair on the current rayon pool. Failed runs are
/// logged and listed in the result instead of aborting the experiment.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    setup: &ExperimentSetup,
) -> Result<ExperimentResult> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.snr_db.len())
        .flat_map(|s| (0..config.runs).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<Result<RunRecord>> = jobs
        .par_iter()
        .map(|&(s, r)| run_one(setup, config, s, r))
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((snr_index, run), outcome) in jobs.into_iter().zip(outcomes) {
        match outcome {
            Ok(rec) => runs.push(rec),
            Err(e) => {
                warn!(
                    "run {run} at {} dB failed and is excluded: {e}",
                    config.snr_db[snr_index]
                );
                failures.push(RunFailure {
                    snr_index,
                    run,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(ExperimentResult {
        snr_db: config.snr_db.clone(),
        methods: config.methods.clone(),
        runs,
        failures,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let setup = ExperimentSetup::build(config, None)?;
    run_experiment_with(config, &setup)
}
