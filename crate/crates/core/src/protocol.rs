//! Opposite-drive current patterns and adjacent-pair voltage measurements.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{CurrentPattern, ForwardSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    electrodes: usize,
    drive_pairs: Vec<(usize, usize)>,
    patterns: Vec<CurrentPattern>,
    measure_pairs: Vec<Vec<(usize, usize)>>,
}

impl Protocol {
    /// Pattern `l` drives +1 A into electrode `l` and draws it out of
    /// `l + L/2`. Each pattern measures every adjacent pair `(k, k+1 mod L)`
    /// that touches neither driven electrode, in ascending `k` with the
    /// wrap-around pair last.
    pub fn opposite(l_count: usize) -> Result<Self> {
        if l_count < 8 || !l_count.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "opposite protocol needs an even electrode count of at least 8, got {l_count}"
            )));
        }
        let half = l_count / 2;
        let mut drive_pairs = Vec::with_capacity(l_count);
        let mut patterns = Vec::with_capacity(l_count);
        let mut measure_pairs = Vec::with_capacity(l_count);
        for l in 0..l_count {
            let sink = (l + half) % l_count;
            drive_pairs.push((l, sink));
            patterns.push(CurrentPattern::dipole(l_count, l, sink, 1.0));
            let pairs = (0..l_count)
                .map(|k| (k, (k + 1) % l_count))
                .filter(|&(a, b)| a != l && a != sink && b != l && b != sink)
                .collect();
            measure_pairs.push(pairs);
        }
        Ok(Self {
            electrodes: l_count,
            drive_pairs,
            patterns,
            measure_pairs,
        })
    }

    pub fn electrode_count(&self) -> usize {
        self.electrodes
    }

    pub fn patterns(&self) -> &[CurrentPattern] {
        &self.patterns
    }

    /// `(source, sink)` electrodes of each pattern.
    pub fn drive_pairs(&self) -> &[(usize, usize)] {
        &self.drive_pairs
    }

    pub fn measure_pairs(&self) -> &[Vec<(usize, usize)>] {
        &self.measure_pairs
    }

    /// Measurements per pattern.
    pub fn n_v(&self) -> usize {
        self.measure_pairs.first().map_or(0, Vec::len)
    }

    /// Length of the flattened measurement vector.
    pub fn n_m(&self) -> usize {
        self.n_v() * self.patterns.len()
    }

    /// Every distinct measured pair, ascending.
    pub fn distinct_measure_pairs(&self) -> Vec<(usize, usize)> {
        let mut all: Vec<(usize, usize)> = self.measure_pairs.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// One line per pattern: `drive a b | measure k0 k1, k0 k1, ...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for ((a, b), pairs) in self.drive_pairs.iter().zip(&self.measure_pairs) {
            let list: Vec<String> = pairs.iter().map(|(k, m)| format!("{k} {m}")).collect();
            let _ = writeln!(out, "drive {a} {b} | measure {}", list.join(", "));
        }
        out
    }
}

/// Flattens per-pattern electrode potentials into the measurement vector:
/// entry `l * n_V + m` is `U[k] - U[k+1]` for the `m`-th pair of pattern `l`.
pub fn measure(solutions: &[ForwardSolution], protocol: &Protocol) -> Result<DVector<f64>> {
    if solutions.len() != protocol.patterns.len() {
        return Err(Error::DimensionMismatch {
            what: "forward solutions per protocol pattern",
            expected: protocol.patterns.len(),
            got: solutions.len(),
        });
    }
    let n_v = protocol.n_v();
    let mut v = DVector::zeros(protocol.n_m());
    for (l, (sol, pairs)) in solutions.iter().zip(&protocol.measure_pairs).enumerate() {
        let u = &sol.electrode_potentials;
        if u.len() != protocol.electrodes {
            return Err(Error::DimensionMismatch {
                what: "electrode potentials",
                expected: protocol.electrodes,
                got: u.len(),
            });
        }
        for (m, &(a, b)) in pairs.iter().enumerate() {
            v[l * n_v + m] = u[a] - u[b];
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_electrodes_give_192() {
        let p = Protocol::opposite(16).unwrap();
        assert_eq!(p.patterns().len(), 16);
        assert_eq!(p.n_v(), 12);
        assert_eq!(p.n_m(), 192);
        assert!(p.measure_pairs().iter().all(|m| m.len() == 12));
    }

    #[test]
    fn eight_electrodes_give_32() {
        let p = Protocol::opposite(8).unwrap();
        assert_eq!(p.n_m(), 32);
        assert_eq!(p.n_v(), 4);
    }

    #[test]
    fn odd_or_small_rejected() {
        assert!(Protocol::opposite(15).is_err());
        assert!(Protocol::opposite(6).is_err());
    }

    #[test]
    fn pattern_zero_excludes_driven_pairs() {
        let p = Protocol::opposite(16).unwrap();
        assert_eq!(p.drive_pairs()[0], (0, 8));
        let kept = &p.measure_pairs()[0];
        let all: Vec<(usize, usize)> = (0..16).map(|k| (k, (k + 1) % 16)).collect();
        let excluded: Vec<(usize, usize)> = all.into_iter().filter(|x| !kept.contains(x)).collect();
        assert_eq!(excluded, vec![(0, 1), (7, 8), (8, 9), (15, 0)]);
        let pat = &p.patterns()[0];
        assert_eq!(pat.currents()[0], 1.0);
        assert_eq!(pat.currents()[8], -1.0);
    }

    #[test]
    fn wrap_pair_comes_last() {
        let p = Protocol::opposite(16).unwrap();
        assert_eq!(*p.measure_pairs()[3].last().unwrap(), (15, 0));
        for pairs in p.measure_pairs() {
            for w in pairs.windows(2) {
                assert!(w[0].0 < w[1].0);
            }
        }
    }

    #[test]
    fn zero_solutions_measure_zero() {
        let p = Protocol::opposite(16).unwrap();
        let sols = vec![ForwardSolution::zeros(10, 16); 16];
        let v = measure(&sols, &p).unwrap();
        assert_eq!(v.len(), 192);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mismatched_solution_count() {
        let p = Protocol::opposite(16).unwrap();
        let sols = vec![ForwardSolution::zeros(10, 16); 15];
        assert!(measure(&sols, &p).is_err());
    }

    #[test]
    fn swapped_pair_flips_sign() {
        let p = Protocol::opposite(8).unwrap();
        let mut sol = ForwardSolution::zeros(4, 8);
        for l in 0..8 {
            sol.electrode_potentials[l] = (l * l) as f64 * 0.1;
        }
        let v = measure(&vec![sol.clone(); 8], &p).unwrap();
        let mut q = p.clone();
        q.measure_pairs[0][0] = (q.measure_pairs[0][0].1, q.measure_pairs[0][0].0);
        let w = measure(&vec![sol; 8], &q).unwrap();
        assert_eq!(w[0], -v[0]);
        assert_eq!(w.rows(1, 31), v.rows(1, 31));
    }

    #[test]
    fn dump_lists_every_pattern() {
        let p = Protocol::opposite(8).unwrap();
        let d = p.dump();
        assert_eq!(d.lines().count(), 8);
        assert_eq!(
            d.lines().next().unwrap(),
            "drive 0 4 | measure 1 2, 2 3, 5 6, 6 7"
        );
    }
}
