//! Measurement-device-independent randomness certification.
//!
//! The prepared states are trusted, the measurement is not. Eve's best guess
//! of the outcome on the target input is bounded by a semidefinite program
//! over POVMs `N_ae` compatible with the observed statistics.

mod guessing;

pub use guessing::{born_probabilities, GuessingProblem, Residuals, SdpSolution};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{two_photon_basis, TwoPhotonFockState, C64};

/// Number of prepared states.
pub const INPUTS: usize = 5;
/// The mutually unbiased input used for randomness generation.
pub const RANDOMNESS_INPUT: usize = 4;
/// Four single clicks followed by the six two-detector coincidences.
pub const OUTCOMES: usize = 10;
/// Detector pairs of the coincidence outcomes, in outcome order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Outcome label: `D0`..`D3` for singles, `D0D1`.. for coincidences.
pub fn outcome_label(a: usize) -> String {
    if a < 4 {
        format!("D{a}")
    } else {
        let (i, j) = PAIRS[a - 4];
        format!("D{i}D{j}")
    }
}

/// Outcome index of a click pattern with one or two detectors, if any.
pub fn outcome_index(clicks: &[usize]) -> Option<usize> {
    match *clicks {
        [i] if i < 4 => Some(i),
        [i, j] => PAIRS.iter().position(|&p| p == (i.min(j), i.max(j))).map(|k| 4 + k),
        _ => None,
    }
}

/// Which two-photon state accompanies the mutually unbiased input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoPhotonVariant {
    /// The state as printed: all four doubly occupied kets with weight 1,
    /// pair kets with weight ±2, normalized by √28.
    #[default]
    Paper,
    /// Two bosons sharing the single-photon mode `ω_4`.
    Bosonic,
}

impl std::str::FromStr for TwoPhotonVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "bosonic" => Ok(Self::Bosonic),
            _ => Err(Error::invalid(format!("unknown two-photon variant `{s}` (expected paper or bosonic)"))),
        }
    }
}

/// `(p(1), p(2))`: the one- and two-photon Poisson terms renormalized to sum to one.
pub fn truncated_poisson_weights(mu: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::invalid(format!("mean photon number must be positive, got {mu}")));
    }
    let p1 = 1.0 / (1.0 + mu / 2.0);
    Ok((p1, 1.0 - p1))
}

/// Amplitudes of `ω_4 = (|0⟩ − |1⟩ + |2⟩ + |3⟩)/2`.
pub const OMEGA_4: [f64; 4] = [0.5, -0.5, 0.5, 0.5];

/// Density operators `ρ_x` on a common Hilbert space.
#[derive(Clone, Debug, Serialize)]
pub struct PreparationEnsemble {
    pub mu: Option<f64>,
    pub p1: f64,
    pub p2: f64,
    pub variant: Option<TwoPhotonVariant>,
    states: Vec<DMatrix<C64>>,
}

const STATE_TOL: f64 = 1e-10;

fn projector(v: &[C64]) -> DMatrix<C64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

impl PreparationEnsemble {
    /// Validates Hermiticity, unit trace and positivity of every state.
    pub fn from_states(states: Vec<DMatrix<C64>>) -> Result<Self> {
        let d = states.first().map_or(0, |s| s.nrows());
        if d == 0 {
            return Err(Error::invalid("ensemble needs at least one state"));
        }
        for (x, rho) in states.iter().enumerate() {
            if rho.shape() != (d, d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: rho.nrows(),
                });
            }
            let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let tr = rho.trace();
            if herm > STATE_TOL || (tr - C64::new(1.0, 0.0)).norm() > STATE_TOL {
                return Err(Error::invalid(format!("state {x} is not a unit-trace Hermitian matrix")));
            }
            let lmin = rho.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            if lmin < -STATE_TOL {
                return Err(Error::invalid(format!("state {x} has negative eigenvalue {lmin:e}")));
            }
        }
        Ok(Self {
            mu: None,
            p1: 1.0,
            p2: 0.0,
            variant: None,
            states,
        })
    }

    /// Pure single-photon states `ω_0..ω_4` on four modes.
    pub fn single_photon() -> Self {
        let states = (0..INPUTS)
            .map(|x| {
                let v: Vec<C64> = (0..4).map(|k| C64::new(single_amp(x, k), 0.0)).collect();
                projector(&v)
            })
            .collect();
        Self {
            mu: None,
            p1: 1.0,
            p2: 0.0,
            variant: None,
            states,
        }
    }

    pub fn dim(&self) -> usize {
        self.states[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, x: usize) -> &DMatrix<C64> {
        &self.states[x]
    }

    pub fn states(&self) -> &[DMatrix<C64>] {
        &self.states
    }

    /// Every state has real entries (then real symmetric POVMs suffice).
    pub fn is_real(&self) -> bool {
        self.states.iter().all(|s| s.iter().all(|z| z.im.abs() < 1e-15))
    }
}

fn single_amp(x: usize, k: usize) -> f64 {
    if x < 4 {
        if k == x {
            1.0
        } else {
            0.0
        }
    } else {
        OMEGA_4[k]
    }
}

/// The literal printed or the bosonic two-photon companion of `ω_4`.
pub fn two_photon_state_4(variant: TwoPhotonVariant) -> TwoPhotonFockState {
    match variant {
        TwoPhotonVariant::Paper => {
            let one = C64::new(1.0, 0.0);
            let terms: Vec<(Vec<u8>, C64)> = vec![
                (vec![2, 0, 0, 0], one),
                (vec![0, 2, 0, 0], one),
                (vec![0, 0, 2, 0], one),
                (vec![0, 0, 0, 2], one),
                (vec![0, 0, 1, 1], -2.0 * one),
                (vec![0, 1, 0, 1], 2.0 * one),
                (vec![0, 1, 1, 0], -2.0 * one),
                (vec![1, 0, 0, 1], 2.0 * one),
                (vec![1, 0, 1, 0], -2.0 * one),
                (vec![1, 1, 0, 0], 2.0 * one),
            ];
            TwoPhotonFockState::from_terms(4, &terms).expect("valid occupations")
        }
        TwoPhotonVariant::Bosonic => {
            let chi = crate::linops::PathQuditState::new(OMEGA_4.iter().map(|&a| C64::new(a, 0.0)).collect())
                .expect("ω_4 is normalized");
            TwoPhotonFockState::from_mode(&chi)
        }
    }
}

/// `ρ_x = p(1)|ω_x⟩⟨ω_x| + p(2)|φ_x⁽²⁾⟩⟨φ_x⁽²⁾|` on the 4 + 10 dimensional truncated Fock space.
///
/// Indices 0..4 are single photons in modes 0..3, indices 4..14 are the
/// two-photon occupations in lexicographic order.
pub fn build_input_states(mu: f64, variant: TwoPhotonVariant) -> Result<PreparationEnsemble> {
    let (p1, p2) = truncated_poisson_weights(mu)?;
    let basis = two_photon_basis(4);
    let d = 4 + basis.len();
    let states = (0..INPUTS)
        .map(|x| {
            let mut one = vec![C64::new(0.0, 0.0); d];
            for k in 0..4 {
                one[k] = C64::new(single_amp(x, k), 0.0);
            }
            let two_state = if x < 4 {
                TwoPhotonFockState::double(4, x)
            } else {
                two_photon_state_4(variant)
            };
            let mut two = vec![C64::new(0.0, 0.0); d];
            two[4..].copy_from_slice(two_state.amplitudes());
            projector(&one) * C64::new(p1, 0.0) + projector(&two) * C64::new(p2, 0.0)
        })
        .collect();
    Ok(PreparationEnsemble {
        mu: Some(mu),
        p1,
        p2,
        variant: Some(variant),
        states,
    })
}

/// Hoeffding half-width `t = √(ln(1/ε) / 2n)`.
pub fn chernoff_halfwidth(epsilon: f64, n: u64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("confidence ε must lie in (0, 1), got {epsilon}")));
    }
    if n == 0 {
        return Err(Error::invalid("round count must be at least 1"));
    }
    Ok(((1.0 / epsilon).ln() / (2.0 * n as f64)).sqrt())
}

/// `H_min = −log₂ P_g` in bits.
pub fn min_entropy(p_guess: f64) -> Result<f64> {
    if !(p_guess > 0.0) || p_guess > 1.0 + 1e-9 {
        return Err(Error::invalid(format!("guessing probability must lie in (0, 1], got {p_guess}")));
    }
    Ok(-p_guess.min(1.0).log2())
}

/// `−log₂ max_a p(a)`: the entropy left when Eve always bets on the likeliest outcome.
pub fn theoretical_upper_bound(distribution: &[f64]) -> Result<f64> {
    let max = distribution.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if distribution.is_empty() || distribution.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) {
        return Err(Error::invalid("upper bound needs a probability distribution"));
    }
    min_entropy(max)
}

/// Observed frequencies `ξ(a|x)` with per-input round counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    /// Outcome-by-input frequencies.
    freqs: DMatrix<f64>,
    rounds: Vec<u64>,
}

impl FrequencyTable {
    pub fn new(freqs: DMatrix<f64>, rounds: Vec<u64>) -> Result<Self> {
        if freqs.ncols() != rounds.len() || freqs.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: freqs.ncols(),
                got: rounds.len(),
            });
        }
        for (x, col) in freqs.column_iter().enumerate() {
            if col.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!("frequencies for input {x} leave [0, 1]")));
            }
            if (col.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("frequencies for input {x} sum to {}", col.sum())));
            }
        }
        if let Some(x) = rounds.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("input {x} has no rounds")));
        }
        Ok(Self { freqs, rounds })
    }

    /// Frequencies from raw counts, outcome-by-input.
    pub fn from_counts(counts: &DMatrix<u64>) -> Result<Self> {
        let rounds: Vec<u64> = counts.column_iter().map(|c| c.sum()).collect();
        if let Some(x) = rounds.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("input {x} has no rounds")));
        }
        let freqs = DMatrix::from_fn(counts.nrows(), counts.ncols(), |a, x| counts[(a, x)] as f64 / rounds[x] as f64);
        Self::new(freqs, rounds)
    }

    pub fn outcomes(&self) -> usize {
        self.freqs.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.freqs.ncols()
    }

    pub fn frequencies(&self) -> &DMatrix<f64> {
        &self.freqs
    }

    pub fn rounds(&self) -> &[u64] {
        &self.rounds
    }

    pub fn column(&self, x: usize) -> Vec<f64> {
        self.freqs.column(x).iter().cloned().collect()
    }

    pub fn halfwidths(&self, epsilon: f64) -> Result<Vec<f64>> {
        self.rounds.iter().map(|&n| chernoff_halfwidth(epsilon, n)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn poisson_weights_examples() {
        // oracle: normalize μe^{−μ} and μ²e^{−μ}/2
        for (mu, p1) in [(0.4, 0.8333), (0.2, 0.9091)] {
            let a = mu * f64::exp(-mu);
            let b = mu * mu / 2.0 * f64::exp(-mu);
            let (q1, q2) = truncated_poisson_weights(mu).unwrap();
            assert_abs_diff_eq!(q1, a / (a + b), epsilon = 1e-12);
            assert_abs_diff_eq!(q1, p1, epsilon = 1e-4);
            assert_abs_diff_eq!(q1 + q2, 1.0, epsilon = 1e-15);
        }
        assert!(truncated_poisson_weights(1e-9).unwrap().0 > 1.0 - 1e-9);
        assert!(truncated_poisson_weights(0.0).is_err());
    }

    #[test]
    fn ensemble_is_valid_and_rank_two() {
        for variant in [TwoPhotonVariant::Paper, TwoPhotonVariant::Bosonic] {
            let e = build_input_states(0.4, variant).unwrap();
            let checked = PreparationEnsemble::from_states(e.states().to_vec()).unwrap();
            assert_eq!(checked.dim(), 14);
            let mut ev: Vec<f64> = e.state(0).clone().symmetric_eigenvalues().iter().cloned().collect();
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_abs_diff_eq!(ev[0], 0.8333, epsilon = 1e-4);
            assert_abs_diff_eq!(ev[1], 0.1667, epsilon = 1e-4);
            assert!(ev[2..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn omega_4_is_unbiased() {
        let e = build_input_states(0.4, TwoPhotonVariant::Paper).unwrap();
        let rho4 = e.state(4);
        for x in 0..4 {
            // ⟨x|ρ_4|x⟩ = p(1)|⟨ω_x|ω_4⟩|²
            assert_abs_diff_eq!(rho4[(x, x)].re, e.p1 / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn printed_two_photon_state_coefficients() {
        let s = two_photon_state_4(TwoPhotonVariant::Paper);
        let r = 28f64.sqrt();
        assert_abs_diff_eq!(s.amplitude(&[2, 0, 0, 0]).unwrap().re, 1.0 / r, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&[1, 1, 0, 0]).unwrap().re, 2.0 / r, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitude(&[0, 0, 1, 1]).unwrap().re, -2.0 / r, epsilon = 1e-15);
        let b = two_photon_state_4(TwoPhotonVariant::Bosonic);
        // bosonic: |1100⟩ carries √2·(½)(−½)
        assert_abs_diff_eq!(b.amplitude(&[1, 1, 0, 0]).unwrap().re, -(2f64.sqrt()) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn chernoff_examples() {
        assert_abs_diff_eq!(chernoff_halfwidth(1e-9, 1_000_000).unwrap(), 0.003219, epsilon = 1e-6);
        let t1 = chernoff_halfwidth(1e-3, 1000).unwrap();
        let t4 = chernoff_halfwidth(1e-3, 4000).unwrap();
        assert_abs_diff_eq!(t4, t1 / 2.0, epsilon = 1e-15);
        assert!(chernoff_halfwidth(1.0 - 1e-15, 10).unwrap() < 1e-7);
        assert!(chernoff_halfwidth(1.0, 10).is_err());
        assert!(chernoff_halfwidth(0.1, 0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(min_entropy(0.25).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_entropy(1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(min_entropy(0.430).unwrap(), 1.218, epsilon = 1e-3);
        assert!(min_entropy(0.0).is_err());
        assert_abs_diff_eq!(theoretical_upper_bound(&[0.25; 4]).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn outcome_labels_round_trip() {
        for a in 0..OUTCOMES {
            let label = outcome_label(a);
            let clicks: Vec<usize> = label
                .split('D')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().unwrap())
                .collect();
            assert_eq!(outcome_index(&clicks), Some(a));
        }
        assert_eq!(outcome_index(&[0, 1, 2]), None);
    }

    #[test]
    fn frequency_table_validation() {
        let counts = DMatrix::from_row_slice(2, 2, &[3u64, 0, 1, 5]);
        let t = FrequencyTable::from_counts(&counts).unwrap();
        assert_eq!(t.rounds(), &[4, 5]);
        assert_abs_diff_eq!(t.frequencies()[(0, 0)], 0.75);
        assert!(FrequencyTable::new(DMatrix::from_element(2, 1, 0.4), vec![10]).is_err());
        assert!(FrequencyTable::from_counts(&DMatrix::from_element(2, 1, 0u64)).is_err());
    }
}
