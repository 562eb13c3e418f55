//! Diagonal-covariance Gaussian mixture fitted by expectation-maximization.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-12;
const MAX_EM_ITERS: usize = 200;
const EM_TOL: f64 = 1e-10;
const MIN_WEIGHT: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmDensity {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub variances: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub density: GmmDensity,
    /// Total data log-likelihood after each EM iteration.
    pub log_likelihoods: Vec<f64>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl GmmDensity {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, DVector::len)
    }

    fn component_log_densities(&self, y: &DVector<f64>) -> Vec<f64> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, mu), var)| {
                let mut acc = 0.0;
                for ((yi, mi), vi) in y.iter().zip(mu.iter()).zip(var.iter()) {
                    let d = yi - mi;
                    acc += ln_2pi + vi.ln() + d * d / vi;
                }
                w.ln() - 0.5 * acc
            })
            .collect()
    }

    /// `ln p(y)`.
    pub fn log_density(&self, y: &DVector<f64>) -> f64 {
        log_sum_exp(&self.component_log_densities(y))
    }
}

/// Fits a `k`-component diagonal mixture. Means start at distinct frames
/// chosen by distance-weighted seeding; deterministic in `seed`.
pub fn fit_gmm(frames: &[DVector<f64>], k: usize, seed: u64) -> Result<GmmFit> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit a mixture to zero frames".into(),
        ));
    }
    if k == 0 || k > frames.len() {
        return Err(Error::InvalidArgument(format!(
            "component count {k} must lie in 1..={}",
            frames.len()
        )));
    }
    let n = frames.len();
    let dim = frames[0].len();
    if let Some(f) = frames.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            what: "frame length",
            expected: dim,
            got: f.len(),
        });
    }

    let global_mean = frames.iter().fold(DVector::zeros(dim), |acc, f| acc + f) / n as f64;
    let global_var = frames
        .iter()
        .fold(DVector::zeros(dim), |acc, f| {
            acc + (f - &global_mean).map(|d| d * d)
        })
        .map(|v| (v / n as f64).max(VARIANCE_FLOOR));

    let means = if k == 1 {
        vec![global_mean]
    } else {
        seed_means(frames, k, seed)
    };
    let mut density = GmmDensity {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![global_var; k],
    };

    let mut log_likelihoods = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];
    for _ in 0..MAX_EM_ITERS {
        // E-step
        for (f, r) in frames.iter().zip(resp.iter_mut()) {
            let logs = density.component_log_densities(f);
            let total = log_sum_exp(&logs);
            for (ri, li) in r.iter_mut().zip(&logs) {
                *ri = (li - total).exp();
            }
        }
        // M-step
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk < MIN_WEIGHT {
                density.weights[c] = MIN_WEIGHT;
                continue;
            }
            let mean = frames
                .iter()
                .zip(&resp)
                .fold(DVector::zeros(dim), |acc, (f, r)| acc + f * r[c])
                / nk;
            let var = frames
                .iter()
                .zip(&resp)
                .fold(DVector::zeros(dim), |acc, (f, r)| {
                    acc + (f - &mean).map(|d| d * d) * r[c]
                })
                .map(|v| (v / nk).max(VARIANCE_FLOOR));
            density.weights[c] = nk / n as f64;
            density.means[c] = mean;
            density.variances[c] = var;
        }
        let wsum: f64 = density.weights.iter().sum();
        density.weights.iter_mut().for_each(|w| *w /= wsum);

        let ll: f64 = frames.iter().map(|f| density.log_density(f)).sum();
        let done = log_likelihoods
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= EM_TOL * ll.abs().max(1.0));
        log_likelihoods.push(ll);
        if done || k == 1 {
            break;
        }
    }
    Ok(GmmFit {
        density,
        log_likelihoods,
    })
}

fn seed_means(frames: &[DVector<f64>], k: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..frames.len())];
    while chosen.len() < k {
        let d2: Vec<f64> = frames
            .iter()
            .map(|f| {
                chosen
                    .iter()
                    .map(|&c| (f - &frames[c]).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = frames.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            // All remaining frames coincide with chosen ones.
            (0..frames.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
    }
    chosen.into_iter().map(|i| frames[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_component_is_sample_moments() {
        let frames: Vec<DVector<f64>> = (0..10)
            .map(|i| DVector::from_vec(vec![i as f64, (i * i) as f64 * 0.1]))
            .collect();
        let fit = fit_gmm(&frames, 1, 0).unwrap();
        let g = &fit.density;
        assert!((g.means[0][0] - 4.5).abs() < 1e-12);
        assert!((g.variances[0][0] - 8.25).abs() < 1e-12);
        assert_eq!(g.weights, vec![1.0]);
    }

    #[test]
    fn identical_frames_hit_floor() {
        let frames = vec![DVector::from_vec(vec![1.0, -2.0, 3.0]); 5];
        let fit = fit_gmm(&frames, 1, 0).unwrap();
        assert!(fit.density.variances[0]
            .iter()
            .all(|&v| v == VARIANCE_FLOOR));
        assert!(fit.density.log_density(&frames[0]).is_finite());
        assert!(fit
            .density
            .log_density(&DVector::from_vec(vec![1.1, -2.0, 3.0]))
            .is_finite());
        let fit2 = fit_gmm(&frames, 2, 0).unwrap();
        assert!(fit2.density.log_density(&frames[0]).is_finite());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(fit_gmm(&[], 1, 0).is_err());
        assert!(fit_gmm(&[DVector::zeros(2)], 2, 0).is_err());
    }

    #[test]
    fn separated_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centers = [
            DVector::from_vec(vec![0.0, 0.0, 0.0]),
            DVector::from_vec(vec![10.0, -10.0, 5.0]),
        ];
        let separation = (&centers[1] - &centers[0]).norm();
        let frames: Vec<DVector<f64>> = (0..200)
            .map(|i| &centers[i % 2] + DVector::from_fn(3, |_, _| noise.sample(&mut rng)))
            .collect();
        let fit = fit_gmm(&frames, 2, 3).unwrap();
        for c in &centers {
            let closest = fit
                .density
                .means
                .iter()
                .map(|m| (m - c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.1 * separation);
        }
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<DVector<f64>> = (0..50)
            .map(|_| DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let a = fit_gmm(&frames, 3, 9).unwrap().density;
        let b = fit_gmm(&frames, 3, 9).unwrap().density;
        assert_eq!(a, b);
    }
}
