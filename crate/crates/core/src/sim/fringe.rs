//! Interference fringes versus preparation phase.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use super::{outcome_distribution, CircuitConfig, DriftState, PREPARATION_PHASES};
use crate::error::{Error, Result};
use crate::mdi::PAIRS;
use crate::tomography::cosine_fit;

/// Arms whose preparation phase is swept. Pattern `i` moves the input from
/// `ω_0` (θ = 0) to `ω_{i+1}` (θ = π).
pub const SCAN_PATTERNS: [[f64; 4]; 3] = [[0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]];

/// Fits below this fraction of the mean count are treated as flat.
const FLAT_FRINGE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FringeScan {
    pub phases: Vec<f64>,
    /// `counts[pattern][point][detector]`: detector click counts (or rates).
    pub counts: Vec<Vec<[f64; 4]>>,
    /// `visibilities[pattern][detector]`, zero for non-interfering channels.
    pub visibilities: Vec<[f64; 4]>,
}

impl FringeScan {
    /// Worst visibility of each detector over the patterns that swing it
    /// between its extremes: D0 in every pattern, D(i+1) in pattern i.
    pub fn detector_visibility(&self) -> [f64; 4] {
        let mut out = [1.0f64; 4];
        for (i, v) in self.visibilities.iter().enumerate() {
            out[0] = out[0].min(v[0]);
            out[i + 1] = out[i + 1].min(v[i + 1]);
        }
        out
    }

    pub fn average_visibility(&self) -> f64 {
        self.detector_visibility().iter().sum::<f64>() / 4.0
    }
}

/// Visibility `|B| / A` of a least-squares fringe `A + B cos(θ + δ)`.
pub fn fringe_visibility(phases: &[f64], counts: &[f64]) -> Result<f64> {
    let (c, _) = cosine_fit(phases.iter().cloned().zip(counts.iter().cloned()))?;
    let amplitude = c[1].hypot(c[2]);
    if c[0] <= 0.0 || amplitude <= FLAT_FRINGE * c[0] {
        return Ok(0.0);
    }
    Ok((amplitude / c[0]).min(1.0))
}

/// Detector click probabilities per pulse for arbitrary preparation phases.
fn detector_rates(phases: [f64; 4], drift: &DriftState, config: &CircuitConfig) -> [f64; 4] {
    // a preparation offset is indistinguishable from a measurement offset of opposite sign
    let mut shifted = *drift;
    for k in 0..4 {
        shifted.bias[k] -= phases[k];
    }
    let d = outcome_distribution(0, &shifted, config);
    let mut rates = [0.0; 4];
    for a in 0..4 {
        rates[a] += d.clicks[a];
    }
    for (i, &(a, b)) in PAIRS.iter().enumerate() {
        rates[a] += d.clicks[4 + i];
        rates[b] += d.clicks[4 + i];
    }
    rates
}

/// Sweeps each pattern over `phases`. With `pulses = Some(n)` counts are
/// binomial draws over `n` pulses per point, otherwise expected rates.
pub fn fringe_scan(
    config: &CircuitConfig,
    drift: &DriftState,
    phases: &[f64],
    pulses: Option<u64>,
    rng: &mut impl Rng,
) -> Result<FringeScan> {
    if phases.len() < 8 {
        return Err(Error::invalid(format!("fringe scan needs at least 8 points, got {}", phases.len())));
    }
    let span = phases.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - phases.iter().cloned().fold(f64::INFINITY, f64::min);
    if span < 2.0 * std::f64::consts::PI - 1e-9 {
        return Err(Error::invalid(format!("fringe scan must span 2π, spans {span:.3}")));
    }
    debug_assert_eq!(PREPARATION_PHASES[0], [0.0; 4]);
    let mut counts = Vec::with_capacity(SCAN_PATTERNS.len());
    let mut visibilities = Vec::with_capacity(SCAN_PATTERNS.len());
    for pattern in SCAN_PATTERNS {
        let series: Vec<[f64; 4]> = phases
            .iter()
            .map(|&t| {
                let rates = detector_rates(pattern.map(|m| m * t), drift, config);
                match pulses {
                    None => rates,
                    Some(n) => rates.map(|p| Binomial::new(n, p.clamp(0.0, 1.0)).expect("valid binomial").sample(rng) as f64),
                }
            })
            .collect();
        let mut vis = [0.0; 4];
        for a in 0..4 {
            let y: Vec<f64> = series.iter().map(|c| c[a]).collect();
            vis[a] = fringe_visibility(phases, &y)?;
        }
        counts.push(series);
        visibilities.push(vis);
    }
    Ok(FringeScan {
        phases: phases.to_vec(),
        counts,
        visibilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| 2.0 * PI * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn ideal_fringes_are_perfect() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut c = CircuitConfig::ideal();
        c.mu = 1e-4;
        let scan = fringe_scan(&c, &DriftState::default(), &grid(33), None, &mut rng).unwrap();
        for v in scan.detector_visibility() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-3);
        }
        // pattern 0 sweeps ω_0 → ω_1: D2 and D3 only see two-photon pulses
        let peak = |a: usize| scan.counts[0].iter().map(|c| c[a]).fold(0.0, f64::max);
        assert!(peak(2) < 1e-3 * peak(0));
        assert!(peak(3) < 1e-3 * peak(0));
    }

    #[test]
    fn flat_channel_has_zero_visibility() {
        let phases = grid(12);
        assert_eq!(fringe_visibility(&phases, &[5.0; 12]).unwrap(), 0.0);
    }

    #[test]
    fn operating_point_visibility() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let c = CircuitConfig::default();
        let v = fringe_scan(&c, &DriftState::default(), &grid(33), None, &mut rng)
            .unwrap()
            .average_visibility();
        assert!(v > 0.985 && v < 0.999, "{v}");
    }

    #[test]
    fn short_scans_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let c = CircuitConfig::default();
        assert!(fringe_scan(&c, &DriftState::default(), &grid(5), None, &mut rng).is_err());
        let narrow: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        assert!(fringe_scan(&c, &DriftState::default(), &narrow, None, &mut rng).is_err());
    }
}
