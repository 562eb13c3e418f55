use nalgebra::{DMatrix, DVector};

use super::EmissionModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub path: Vec<usize>,
    pub log_likelihood: f64,
}

/// Most likely state sequence under a row-stochastic `transition`, log-domain
/// `emissions` (states × frames) and initial distribution `prior`.
///
/// Ties go to the lowest state index, both for the final state and for every
/// predecessor during backtracking.
pub fn viterbi(
    transition: &DMatrix<f64>,
    emissions: &EmissionModel,
    prior: &DVector<f64>,
) -> Result<ViterbiResult> {
    let log_e = emissions.log_values();
    let (m, t_len) = log_e.shape();
    if t_len == 0 {
        return Err(Error::InvalidArgument("no frames to decode".into()));
    }
    if transition.shape() != (m, m) || prior.len() != m {
        return Err(Error::DimensionMismatch {
            what: "hmm state count",
            expected: m,
            got: prior.len(),
        });
    }
    let prior_sum = prior.sum();
    if (prior_sum - 1.0).abs() > 1e-9 || prior.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prior sums to {prior_sum}, expected 1"
        )));
    }

    // Predecessor lists with their log transition probabilities, ascending.
    let preds: Vec<Vec<(usize, f64)>> = (0..m)
        .map(|j| {
            (0..m)
                .filter(|&i| transition[(i, j)] > 0.0)
                .map(|i| (i, transition[(i, j)].ln()))
                .collect()
        })
        .collect();

    let mut delta: Vec<f64> = (0..m).map(|i| prior[i].ln() + log_e[(i, 0)]).collect();
    let mut back = vec![vec![0usize; m]; t_len];
    let mut next = vec![0.0; m];
    for t in 1..t_len {
        for j in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut arg = preds[j].first().map_or(0, |p| p.0);
            for &(i, lp) in &preds[j] {
                let s = delta[i] + lp;
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + log_e[(j, t)];
            back[t][j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut last = 0;
    for i in 1..m {
        if delta[i] > delta[last] {
            last = i;
        }
    }
    let log_likelihood = delta[last];
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(ViterbiResult {
        path,
        log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_example() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let e = EmissionModel::from_probabilities(&DMatrix::from_row_slice(
            2,
            2,
            &[0.8, 0.3, 0.2, 0.7],
        ));
        let prior = DVector::from_vec(vec![0.5, 0.5]);
        let r = viterbi(&p, &e, &prior).unwrap();
        assert_eq!(r.path, vec![0, 0]);
        assert!((r.log_likelihood.exp() - 0.108).abs() < 1e-12);
    }

    #[test]
    fn single_frame_is_weighted_argmax() {
        let p = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let e =
            EmissionModel::from_probabilities(&DMatrix::from_column_slice(3, 1, &[0.2, 0.5, 0.3]));
        let prior = DVector::from_vec(vec![0.6, 0.1, 0.3]);
        // 0.12, 0.05, 0.09
        assert_eq!(viterbi(&p, &e, &prior).unwrap().path, vec![0]);
    }

    #[test]
    fn uninformative_emissions_follow_prior_and_self_loops() {
        let p = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.2, 0.6, 0.2, 0.0, 0.3, 0.7]);
        let e = EmissionModel::from_probabilities(&DMatrix::from_element(3, 4, 1.0 / 3.0));
        let prior = DVector::from_vec(vec![0.2, 0.5, 0.3]);
        assert_eq!(viterbi(&p, &e, &prior).unwrap().path, vec![1, 1, 1, 1]);
    }

    #[test]
    fn rejects_empty_and_bad_prior() {
        let p = DMatrix::identity(2, 2);
        let e = EmissionModel::from_log(DMatrix::zeros(2, 0));
        assert!(viterbi(&p, &e, &DVector::from_vec(vec![0.5, 0.5])).is_err());
        let e = EmissionModel::from_log(DMatrix::zeros(2, 1));
        assert!(viterbi(&p, &e, &DVector::from_vec(vec![0.7, 0.7])).is_err());
    }
}
