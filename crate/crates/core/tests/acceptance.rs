//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its verdict; exits nonzero if a criterion outside the documented
//! list of known shortfalls fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{brute_force_decode, random_distribution, random_spd, random_stochastic_rows};
use eittrack::fem::{compute_jacobian, ConductivityField, CurrentPattern, ForwardModel};
use eittrack::hmm::{build_emissions, fit_gmm, viterbi, EmissionModel};
use eittrack::kalman::{KalmanModel, KalmanState};
use eittrack::markov::{build_markov, mixing_frames};
use eittrack::mesh::{element_adjacency, generate_disk_mesh, place_electrodes};
use eittrack::protocol::Protocol;
use eittrack::sim::{
    add_noise, random_walk, run_experiment_with, ExperimentConfig, ExperimentResult,
    ExperimentSetup, Method, StepRule,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose failure is expected with the default model and is
/// discussed in the README.
const KNOWN_SHORTFALLS: &[usize] = &[1];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig {
        frames: 200,
        runs: 20,
        snr_db: vec![100.0, 60.0, 20.0],
        ..ExperimentConfig::default()
    }
}

fn mean(result: &ExperimentResult, method: Method, snr_index: usize) -> f64 {
    result.mean_mae(method, snr_index).unwrap_or(f64::NAN)
}

fn method_ordering(result: &ExperimentResult) -> Verdict {
    let mut pass = result.failures.is_empty();
    let mut parts = Vec::new();
    for (si, snr) in result.snr_db.iter().enumerate() {
        let (jac, kf, hmm) = (
            mean(result, Method::Jac, si),
            mean(result, Method::Kf, si),
            mean(result, Method::Hmm, si),
        );
        pass &= hmm < jac && hmm < kf;
        parts.push(format!("{snr} dB jac {jac:.4} kf {kf:.4} hmm {hmm:.4}"));
    }
    verdict(pass, parts.join("; "))
}

fn noise_degradation(result: &ExperimentResult) -> Verdict {
    let hi = result.snr_db.iter().position(|&s| s == 100.0).unwrap();
    let lo = result.snr_db.iter().position(|&s| s == 20.0).unwrap();
    let jac_hi = mean(result, Method::Jac, hi);
    let jac_lo = mean(result, Method::Jac, lo);
    let kf_hi = mean(result, Method::Kf, hi);
    let hmm_hi = mean(result, Method::Hmm, hi);
    verdict(
        jac_lo >= 2.0 * jac_hi && kf_hi > hmm_hi,
        format!(
            "jac 20 dB {jac_lo:.4} vs 2 x 100 dB {:.4}; kf 100 dB {kf_hi:.4} vs hmm {hmm_hi:.4}",
            2.0 * jac_hi
        ),
    )
}

fn viterbi_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for _ in 0..100 {
        let m = rng.random_range(1..=5);
        let t_len = rng.random_range(1..=6);
        let p = random_stochastic_rows(&mut rng, m, 0.3);
        let log_e = DMatrix::from_fn(m, t_len, |_, _| rng.random_range(1e-3..1.0f64).ln());
        let prior = random_distribution(&mut rng, m);
        let decoded = viterbi(&p, &EmissionModel::from_log(log_e.clone()), &prior).unwrap();
        let (path, ll) = brute_force_decode(&p, &log_e, &prior);
        mismatched += usize::from(decoded.path != path);
        worst = worst.max((decoded.log_likelihood - ll).abs());
    }
    verdict(
        mismatched == 0 && worst <= 1e-10,
        format!("{mismatched} path mismatches, max log-likelihood error {worst:.2e}"),
    )
}

fn kalman_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let t_len = rng.random_range(1..=5);
        let model = KalmanModel {
            transition: DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)),
            process_noise: random_spd(&mut rng, n),
            measurement_noise: random_spd(&mut rng, m),
        };
        let j = DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
        let mut state = KalmanState {
            mean: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            covariance: random_spd(&mut rng, n),
        };
        // Joint Gaussian over (x_t, y_1..y_t), maintained as the prior moments
        // of x_t and its cross-covariance with every observation so far.
        let (mut mu_x, mut cov_x) = (state.mean.clone(), state.covariance.clone());
        let mut cross: Vec<DMatrix<f64>> = Vec::new();
        let mut obs_cov: Vec<Vec<DMatrix<f64>>> = Vec::new();
        let mut obs_mean: Vec<DVector<f64>> = Vec::new();
        let mut ys: Vec<DVector<f64>> = Vec::new();
        for _ in 0..t_len {
            let a = &model.transition;
            mu_x = a * &mu_x;
            cov_x = a * &cov_x * a.transpose() + &model.process_noise;
            cross = cross.iter().map(|c| a * c).collect();
            // New observation y_t = J x_t + v_t.
            let new_cross: Vec<DMatrix<f64>> = cross.iter().map(|c| &j * c).collect();
            for (row, c) in obs_cov.iter_mut().zip(&new_cross) {
                row.push(c.transpose());
            }
            let mut new_row = new_cross.clone();
            new_row.push(&j * &cov_x * j.transpose() + &model.measurement_noise);
            obs_cov.push(new_row);
            cross.push(&cov_x * j.transpose());
            obs_mean.push(&j * &mu_x);
            let y = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
            ys.push(y.clone());
            state = model.step(&state, &y, &j).unwrap();

            let k = ys.len();
            let big = DMatrix::from_fn(k * m, k * m, |r, c| obs_cov[r / m][c / m][(r % m, c % m)]);
            let big_cross = DMatrix::from_fn(n, k * m, |r, c| cross[c / m][(r, c % m)]);
            let resid = DVector::from_fn(k * m, |r, _| ys[r / m][r % m] - obs_mean[r / m][r % m]);
            let inv = big.try_inverse().unwrap();
            let mean = &mu_x + &big_cross * &inv * resid;
            let cov = &cov_x - &big_cross * &inv * big_cross.transpose();
            worst = worst
                .max((&state.mean - mean).amax())
                .max((&state.covariance - cov).amax());
        }
    }
    verdict(worst <= 1e-10, format!("max deviation {worst:.2e}"))
}

fn jacobian_accuracy() -> Verdict {
    let mesh = generate_disk_mesh(152, 0).unwrap();
    let layout = place_electrodes(&mesh, 16, 0.5).unwrap();
    let model = ForwardModel::new(&mesh, &layout).unwrap();
    let protocol = Protocol::opposite(16).unwrap();
    let sigma0 = ConductivityField::uniform(mesh.element_count(), 1.0).unwrap();
    let jac = compute_jacobian(&model, &protocol, &sigma0).unwrap().matrix;
    let scale = jac.amax();
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let delta = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let row = rng.random_range(0..jac.nrows());
        let e = rng.random_range(0..jac.ncols());
        let shifted = |d: f64| {
            let mut v = sigma0.values().to_vec();
            v[e] += d;
            model
                .measurements(&ConductivityField::new(v).unwrap(), &protocol)
                .unwrap()[row]
        };
        let fd = (shifted(delta) - shifted(-delta)) / (2.0 * delta);
        worst = worst.max((fd - jac[(row, e)]).abs() / scale);
    }
    verdict(worst <= 1e-3, format!("max error {worst:.2e} of max|J|"))
}

fn fem_physics() -> Verdict {
    let mesh = generate_disk_mesh(287, 0).unwrap();
    let layout = place_electrodes(&mesh, 16, 0.5).unwrap();
    let model = ForwardModel::new(&mesh, &layout).unwrap();
    let n = mesh.element_count();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut fields = vec![ConductivityField::uniform(n, 1.0).unwrap()];
    for _ in 0..5 {
        fields.push(
            ConductivityField::new((0..n).map(|_| rng.random_range(0.2..5.0)).collect()).unwrap(),
        );
    }
    let mut reciprocity: f64 = 0.0;
    let mut sum_err: f64 = 0.0;
    for sigma in &fields {
        let sys = model.system(sigma).unwrap();
        for _ in 0..6 {
            let a = rng.random_range(0..16);
            let b = (a + rng.random_range(1..16)) % 16;
            let c = rng.random_range(0..16);
            let d = (c + rng.random_range(1..16)) % 16;
            let ua = sys
                .solve(&CurrentPattern::dipole(16, a, b, 1.0))
                .unwrap()
                .electrode_potentials;
            let uc = sys
                .solve(&CurrentPattern::dipole(16, c, d, 1.0))
                .unwrap()
                .electrode_potentials;
            let z_ac = ua[c] - ua[d];
            let z_ca = uc[a] - uc[b];
            reciprocity = reciprocity
                .max((z_ac - z_ca).abs() / z_ac.abs().max(z_ca.abs()).max(f64::MIN_POSITIVE));
            sum_err = sum_err.max(ua.sum().abs()).max(uc.sum().abs());
        }
    }
    let sys = model.system(&fields[0]).unwrap();
    let u = sys
        .solve(&CurrentPattern::dipole(16, 0, 8, 1.0))
        .unwrap()
        .electrode_potentials;
    let mirror = (0..16)
        .map(|l| {
            (u[l] - u[(16 - l) % 16])
                .abs()
                .max((u[l] + u[(24 - l) % 16]).abs())
        })
        .fold(0.0, f64::max);
    verdict(
        reciprocity <= 1e-8 && sum_err <= 1e-9 && mirror <= 1e-6,
        format!("reciprocity {reciprocity:.2e}, potential sum {sum_err:.2e}, mirror {mirror:.2e}"),
    )
}

fn markov_closed_forms() -> Verdict {
    let mesh = generate_disk_mesh(152, 0).unwrap();
    let m = build_markov(&element_adjacency(&mesh)).unwrap();
    let p = m.transition();
    let row_err = p
        .row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let oracle = a.lu().solve(&b).unwrap();
    let pi_err = (m.stationary() - oracle).amax();
    let t_star = mixing_frames(p, 0.01).unwrap();
    verdict(
        row_err <= 1e-12 && pi_err <= 1e-10 && t_star <= 500,
        format!("row sum error {row_err:.2e}, stationary error {pi_err:.2e}, T* = {t_star}"),
    )
}

fn column_scaling(setup: &ExperimentSetup) -> Verdict {
    let truth = random_walk(
        &setup.forward_mesh,
        200,
        StepRule::AlwaysMove,
        &mut ChaCha8Rng::seed_from_u64(71),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let frames: Vec<DVector<f64>> = truth
        .elements
        .iter()
        .map(|&e| {
            add_noise(setup.bank.frame(Some(e)).unwrap(), 40.0, &mut rng) - setup.bank.reference()
        })
        .collect();
    let density = fit_gmm(&frames, 1, 0).unwrap().density;
    let pi = setup.trackers.markov.stationary();
    let emissions = build_emissions(&setup.trackers.reconstructor, &frames, pi, &density).unwrap();
    let base = viterbi(setup.trackers.markov.transition(), &emissions, pi)
        .unwrap()
        .path;
    let mut identical = 0;
    for _ in 0..10 {
        let mut log_e = emissions.log_values().clone();
        for mut col in log_e.column_iter_mut() {
            col.add_scalar_mut(rng.random_range(1e-8..1e8f64).ln());
        }
        let path = viterbi(
            setup.trackers.markov.transition(),
            &EmissionModel::from_log(log_e),
            pi,
        )
        .unwrap()
        .path;
        identical += usize::from(path == base);
    }
    verdict(
        identical == 10,
        format!("{identical}/10 scaled decodes identical"),
    )
}

fn csv_bytes(result: &ExperimentResult) -> (Vec<u8>, Vec<u8>) {
    let mut frames = Vec::new();
    let mut agg = Vec::new();
    result.write_results_csv(&mut frames).unwrap();
    result.write_aggregate_csv(&mut agg).unwrap();
    (frames, agg)
}

fn determinism(config: &ExperimentConfig, first: &ExperimentResult) -> Verdict {
    let setup = ExperimentSetup::build(config, None).unwrap();
    let second = run_experiment_with(config, &setup).unwrap();
    let (a, b) = (csv_bytes(first), csv_bytes(&second));
    verdict(
        a == b,
        format!(
            "results {} bytes, aggregate {} bytes, identical: {}",
            a.0.len(),
            a.1.len(),
            a == b
        ),
    )
}

fn protocol_arithmetic() -> Verdict {
    let p = Protocol::opposite(16).unwrap();
    let total: usize = p.measure_pairs().iter().map(Vec::len).sum();
    verdict(
        p.patterns().len() == 16 && p.n_v() == 12 && p.n_m() == 192 && total == 192,
        format!(
            "{} patterns x {} measurements = {}",
            p.patterns().len(),
            p.n_v(),
            p.n_m()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let config = desk_config();
    let setup = ExperimentSetup::build(&config, None).unwrap();
    let desk = run_experiment_with(&config, &setup).unwrap();

    let verdicts = [
        (1, "method ordering", method_ordering(&desk)),
        (2, "noise degradation", noise_degradation(&desk)),
        (3, "viterbi exactness", viterbi_exactness()),
        (4, "kalman exactness", kalman_exactness()),
        (5, "jacobian accuracy", jacobian_accuracy()),
        (6, "fem physics", fem_physics()),
        (7, "markov closed forms", markov_closed_forms()),
        (8, "emission column scaling", column_scaling(&setup)),
        (9, "determinism", determinism(&config, &desk)),
        (10, "protocol arithmetic", protocol_arithmetic()),
    ];

    let mut unexpected = 0;
    for (id, name, v) in &verdicts {
        let status = match (v.pass, KNOWN_SHORTFALLS.contains(id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} {name}: {status} [{}]", v.detail);
    }
    println!(
        "acceptance finished in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
