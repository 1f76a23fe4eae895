//! Two-photon states over `N` modes.
//!
//! The basis is every occupation vector with total photon number two, in
//! ascending lexicographic order: for four modes `0002, 0011, 0020, 0101, …,
//! 2000`. This order fixes column layouts of anything written to disk.

use super::{PathQuditState, UnitaryMatrix, C64, NORM_TOL};
use crate::error::{Error, Result};

/// Occupation numbers per mode.
pub type Occupation = Vec<u8>;

/// All occupation vectors of `modes` modes holding two photons, lexicographically sorted.
pub fn two_photon_basis(modes: usize) -> Vec<Occupation> {
    let mut out = Vec::with_capacity(modes * (modes + 1) / 2);
    for j in 0..modes {
        for k in j..modes {
            let mut o = vec![0u8; modes];
            o[j] += 1;
            o[k] += 1;
            out.push(o);
        }
    }
    out.sort();
    out
}

/// Occupied modes listed with multiplicity, e.g. `0110 → [1, 2]`, `2000 → [0, 0]`.
fn occupied(o: &[u8]) -> [usize; 2] {
    let mut modes = [0usize; 2];
    let mut n = 0;
    for (k, &c) in o.iter().enumerate() {
        for _ in 0..c {
            modes[n] = k;
            n += 1;
        }
    }
    modes
}

fn factorial_weight(o: &[u8]) -> f64 {
    o.iter().map(|&c| if c == 2 { 2.0 } else { 1.0 }).product()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhotonFockState {
    modes: usize,
    amplitudes: Vec<C64>,
}

impl TwoPhotonFockState {
    /// Wraps amplitudes given in [`two_photon_basis`] order.
    pub fn new(modes: usize, amplitudes: Vec<C64>) -> Result<Self> {
        let size = modes * (modes + 1) / 2;
        if amplitudes.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                got: amplitudes.len(),
            });
        }
        let norm2: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!(
                "two-photon state is not normalized (norm² = {norm2})"
            )));
        }
        Ok(Self { modes, amplitudes })
    }

    /// Builds a state from sparse `(occupation, amplitude)` terms and normalizes it.
    pub fn from_terms(modes: usize, terms: &[(Occupation, C64)]) -> Result<Self> {
        let basis = two_photon_basis(modes);
        let mut amps = vec![C64::new(0.0, 0.0); basis.len()];
        for (occ, amp) in terms {
            let idx = basis.binary_search(occ).map_err(|_| {
                Error::invalid(format!("{occ:?} is not a two-photon occupation over {modes} modes"))
            })?;
            amps[idx] += amp;
        }
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("two-photon state has zero norm"));
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Ok(Self { modes, amplitudes: amps })
    }

    /// Both photons in mode `k`.
    pub fn double(modes: usize, k: usize) -> Self {
        let mut o = vec![0u8; modes];
        o[k] = 2;
        Self::from_terms(modes, &[(o, C64::new(1.0, 0.0))]).expect("valid occupation")
    }

    /// Two photons sharing the single-photon mode `chi`: `(Σ χ_k a_k†)² / √2 |vac⟩`.
    pub fn from_mode(chi: &PathQuditState) -> Self {
        let a = chi.amplitudes();
        let modes = a.len();
        let amplitudes = two_photon_basis(modes)
            .iter()
            .map(|o| {
                let [j, k] = occupied(o);
                if j == k {
                    a[j] * a[j]
                } else {
                    a[j] * a[k] * std::f64::consts::SQRT_2
                }
            })
            .collect();
        Self { modes, amplitudes }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, occ: &[u8]) -> Option<C64> {
        two_photon_basis(self.modes)
            .binary_search(&occ.to_vec())
            .ok()
            .map(|i| self.amplitudes[i])
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Applies `a_k† → Σ_j U_jk a_j†` to a two-photon state.
///
/// Each output amplitude is the permanent of the 2×2 submatrix of `U`
/// selected by the occupied output rows and input columns, divided by the
/// square root of the occupation factorials on both sides.
pub fn two_photon_evolve(u: &UnitaryMatrix, input: &TwoPhotonFockState) -> Result<TwoPhotonFockState> {
    let n = u.dim();
    if input.modes != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: input.modes,
        });
    }
    let basis = two_photon_basis(n);
    let modes: Vec<[usize; 2]> = basis.iter().map(|o| occupied(o)).collect();
    let weight: Vec<f64> = basis.iter().map(|o| factorial_weight(o)).collect();
    let mut out = vec![C64::new(0.0, 0.0); basis.len()];
    for (i, &a_in) in input.amplitudes.iter().enumerate() {
        if a_in == C64::new(0.0, 0.0) {
            continue;
        }
        let [k, l] = modes[i];
        for (o, slot) in out.iter_mut().enumerate() {
            let [j, m] = modes[o];
            let perm = u.get(j, k) * u.get(m, l) + u.get(j, l) * u.get(m, k);
            *slot += a_in * perm / (weight[i] * weight[o]).sqrt();
        }
    }
    Ok(TwoPhotonFockState { modes: n, amplitudes: out })
}
