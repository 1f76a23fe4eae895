//! Simulation of the prepare-and-measure experiment: weak coherent pulses
//! through a lossy four-arm interferometer with drifting phases, threshold
//! detection, active stabilization and block-wise bookkeeping.
//!
//! Each block of pulses sees a fixed drift state, so block tallies are drawn
//! from the exact per-pulse outcome distribution ([`outcome_distribution`])
//! with multinomial sampling. [`propagate_and_detect`] simulates a single
//! pulse photon by photon and is used to cross-check that distribution.

mod fringe;
mod protocol;
mod stabilizer;

pub use fringe::{fringe_scan, fringe_visibility, FringeScan, SCAN_PATTERNS};
pub use protocol::{run_protocol, BlockRecord, Realignment, RunLog, Zone};
pub use stabilizer::{d0_fraction, stabilize, track, Probe, StabilizationReport};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{measurement_unitary, prepare_state, two_photon_basis, two_photon_evolve, TwoPhotonFockState, C64};
use crate::mdi::{outcome_index, INPUTS, OUTCOMES};

/// Independent random streams derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substream {
    Drift = 1,
    Sampling = 2,
    Controller = 3,
}

pub fn substream(seed: u64, which: Substream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Preparation phases `φ^A` of the five inputs.
pub const PREPARATION_PHASES: [[f64; 4]; INPUTS] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, PI, PI],
    [0.0, PI, 0.0, PI],
    [0.0, PI, PI, 0.0],
    [0.0, PI, 0.0, 0.0],
];

/// Perturb-and-observe controller settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizerConfig {
    /// Bias phase increment per perturbation (rad).
    pub step: f64,
    /// Detected `x = 0` rounds per probe estimate of the D0 fraction.
    pub probe_rounds: u64,
    /// Stop once the D0 fraction reaches `(1 − tolerance)` of its aligned value.
    pub tolerance: f64,
    /// Cap on full passes over modulators 1..3.
    pub max_sweeps: usize,
    /// Apply one perturb-and-observe pass at every stabilization check.
    pub tracking: bool,
    /// Blocks measured after a realignment before recording resumes.
    pub settle_blocks: usize,
}

impl Default for StabilizerConfig {
    fn default() -> Self {
        Self {
            step: 0.03,
            probe_rounds: 100_000,
            tolerance: 5e-4,
            max_sweeps: 200,
            tracking: true,
            settle_blocks: 50,
        }
    }
}

/// Optical, electronic and protocol parameters of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitConfig {
    /// Mean photon number per pulse.
    pub mu: f64,
    /// Transmission of one multiport beamsplitter.
    pub mbs_transmission: f64,
    pub mbs_count: u32,
    /// Transmission of one multiplexer unit.
    pub demux_transmission: f64,
    pub demux_count: u32,
    /// Insertion loss of the measurement-stage phase modulators (dB).
    pub modulator_loss_db: f64,
    /// Remaining losses not itemized above (splices, connectors).
    pub other_transmission: f64,
    pub detector_efficiency: f64,
    /// Dark counts per detector per second.
    pub dark_count_rate: f64,
    /// Send pulses of three or more photons to the detectors instead of
    /// discarding them outright.
    pub multi_photon_clicks: bool,
    /// Pulses per second.
    pub repetition_rate: f64,
    /// Integration block (s).
    pub block_length: f64,
    /// Fraction of pulses that carry the randomness input.
    pub randomness_fraction: f64,
    /// Blocks are recorded while `p̄` strictly exceeds this value.
    pub success_threshold: f64,
    /// Blocks pooled into the `p̄` estimate.
    pub success_window_blocks: usize,
    /// Interval between stabilization checks (s).
    pub check_interval: f64,
    /// Standard deviation of each arm's drift increment (rad per step).
    pub drift_sigma: f64,
    /// Time between drift increments (s).
    pub drift_interval: f64,
    /// Pulse-to-pulse phase jitter per arm (rad, rms).
    pub phase_jitter: f64,
    pub stabilizer: StabilizerConfig,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            mu: 0.4,
            mbs_transmission: 0.957,
            mbs_count: 2,
            demux_transmission: 0.968,
            demux_count: 4,
            modulator_loss_db: 2.05,
            other_transmission: 0.857,
            detector_efficiency: 0.10,
            dark_count_rate: 0.0,
            multi_photon_clicks: false,
            repetition_rate: 2e6,
            block_length: 0.1,
            randomness_fraction: 0.9,
            success_threshold: 0.992,
            success_window_blocks: 50,
            check_interval: 0.2,
            drift_sigma: 0.01,
            drift_interval: 0.1,
            phase_jitter: 0.075,
            stabilizer: StabilizerConfig::default(),
            epsilon: 1e-9,
            seed: 0,
        }
    }
}

impl CircuitConfig {
    /// Lossless, noiseless, drift-free circuit with unit detection efficiency
/// and no settling period.
    pub fn ideal() -> Self {
        Self {
            mbs_transmission: 1.0,
            demux_transmission: 1.0,
            modulator_loss_db: 0.0,
            other_transmission: 1.0,
            detector_efficiency: 1.0,
            drift_sigma: 0.0,
            phase_jitter: 0.0,
            stabilizer: StabilizerConfig {
                settle_blocks: 0,
                ..StabilizerConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |field: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(field, format!("must lie in [0, 1], got {v}")))
            }
        };
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |field: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be non-negative, got {v}")))
            }
        };
        positive("mu", self.mu)?;
        unit("mbs_transmission", self.mbs_transmission)?;
        unit("demux_transmission", self.demux_transmission)?;
        unit("other_transmission", self.other_transmission)?;
        unit("detector_efficiency", self.detector_efficiency)?;
        unit("randomness_fraction", self.randomness_fraction)?;
        unit("success_threshold", self.success_threshold)?;
        non_negative("modulator_loss_db", self.modulator_loss_db)?;
        non_negative("dark_count_rate", self.dark_count_rate)?;
        positive("repetition_rate", self.repetition_rate)?;
        positive("block_length", self.block_length)?;
        positive("check_interval", self.check_interval)?;
        positive("drift_interval", self.drift_interval)?;
        non_negative("drift_sigma", self.drift_sigma)?;
        non_negative("phase_jitter", self.phase_jitter)?;
        positive("stabilizer.step", self.stabilizer.step)?;
        unit("stabilizer.tolerance", self.stabilizer.tolerance)?;
        if self.success_window_blocks == 0 {
            return Err(Error::config("success_window_blocks", "must be at least 1"));
        }
        if self.stabilizer.probe_rounds == 0 {
            return Err(Error::config("stabilizer.probe_rounds", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("epsilon", format!("must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.dark_probability() >= 1.0 {
            return Err(Error::config("dark_count_rate", "exceeds one count per pulse"));
        }
        Ok(())
    }

    /// Transmission of the interferometer chain up to the detectors.
    pub fn transmission(&self) -> f64 {
        self.demux_transmission.powi(self.demux_count as i32)
            * self.mbs_transmission.powi(self.mbs_count as i32)
            * 10f64.powf(-self.modulator_loss_db / 10.0)
            * self.other_transmission
    }

    /// Probability that one photon leaving the source produces a click.
    pub fn photon_detection_probability(&self) -> f64 {
        self.transmission() * self.detector_efficiency
    }

    /// Dark click probability per detector and pulse.
    pub fn dark_probability(&self) -> f64 {
        self.dark_count_rate / self.repetition_rate
    }

    /// Pulses per block, rounded to the nearest integer.
    pub fn rounds_per_block(&self) -> u64 {
        (self.repetition_rate * self.block_length).round() as u64
    }

    /// Input distribution: the randomness input and a uniform share for the rest.
    pub fn input_weights(&self) -> [f64; INPUTS] {
        let basis = (1.0 - self.randomness_fraction) / 4.0;
        [basis, basis, basis, basis, self.randomness_fraction]
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_pi(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Slow phase noise `φ^n` and the compensating bias phases `φ^bias` of the
/// measurement-stage modulators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftState {
    pub noise: [f64; 4],
    pub bias: [f64; 4],
}

impl DriftState {
    pub fn new(noise: [f64; 4]) -> Self {
        Self {
            noise: noise.map(wrap_pi),
            bias: [0.0; 4],
        }
    }

    /// Total measurement-stage phase per arm.
    pub fn measurement_phases(&self) -> [f64; 4] {
        std::array::from_fn(|k| self.noise[k] + self.bias[k])
    }

    /// Residual phase of arms 1..3 relative to arm 0, wrapped.
    pub fn residual(&self) -> [f64; 3] {
        let m = self.measurement_phases();
        std::array::from_fn(|k| wrap_pi(m[k + 1] - m[0]))
    }
}

/// One Gaussian random-walk step of every arm's noise phase.
pub fn drift_step(state: &DriftState, config: &CircuitConfig, rng: &mut impl Rng) -> DriftState {
    if config.drift_sigma == 0.0 {
        return *state;
    }
    let normal = Normal::new(0.0, config.drift_sigma).expect("validated sigma");
    let mut next = *state;
    for phi in next.noise.iter_mut() {
        *phi = wrap_pi(*phi + normal.sample(rng));
    }
    next
}

/// Poisson photon number of one pulse.
pub fn sample_photon_number(mu: f64, rng: &mut impl Rng) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    Poisson::new(mu).expect("positive mean").sample(rng) as u64
}

/// Result of one pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    NoClick,
    /// Index into the ten certified outcomes (four singles, six pairs).
    Click(usize),
    /// Three or more photons in the pulse, or three or more detectors fired.
    Discard,
}

/// Exact per-pulse outcome probabilities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeDistribution {
    pub no_click: f64,
    pub clicks: [f64; OUTCOMES],
    pub discard: f64,
}

impl OutcomeDistribution {
    /// Probabilities conditioned on a certified click.
    pub fn post_selected(&self) -> [f64; OUTCOMES] {
        let total: f64 = self.clicks.iter().sum();
        self.clicks.map(|p| if total > 0.0 { p / total } else { 0.0 })
    }

    pub fn click_probability(&self) -> f64 {
        self.clicks.iter().sum()
    }
}

/// Coherence kept between occupations `n`, `n′` under independent Gaussian
/// phase jitter of rms `σ` per arm: `exp(−σ²|n − n′|²/2)`.
fn jitter_weight(sigma: f64, n: &[u8], m: &[u8]) -> f64 {
    let d2: f64 = n.iter().zip(m).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
    (-0.5 * sigma * sigma * d2).exp()
}

/// Output occupation distributions for the one- and two-photon components
/// of input `x`.
struct ModeStatistics {
    single: [f64; 4],
    /// Indexed like [`two_photon_basis`].
    pair: Vec<f64>,
}

fn mode_statistics(x: usize, drift: &DriftState, config: &CircuitConfig) -> ModeStatistics {
    let u = measurement_unitary(drift.measurement_phases());
    let chi = prepare_state(PREPARATION_PHASES[x]);
    let sigma = config.phase_jitter;
    let um = u.matrix().as_matrix();

    let unit: Vec<Vec<u8>> = (0..4)
        .map(|k| {
            let mut o = vec![0u8; 4];
            o[k] = 1;
            o
        })
        .collect();
    let c = chi.amplitudes();
    let rho1 = DMatrix::from_fn(4, 4, |k, l| c[k] * c[l].conj() * jitter_weight(sigma, &unit[k], &unit[l]));
    let out1 = um * rho1 * um.adjoint();
    let single = std::array::from_fn(|a| out1[(a, a)].re.max(0.0));

    let basis = two_photon_basis(4);
    let phi = TwoPhotonFockState::from_mode(&chi);
    let amps = phi.amplitudes();
    let dim = basis.len();
    let rho2 = DMatrix::from_fn(dim, dim, |i, j| amps[i] * amps[j].conj() * jitter_weight(sigma, &basis[i], &basis[j]));
    let mut t = DMatrix::<C64>::zeros(dim, dim);
    for (j, occ) in basis.iter().enumerate() {
        let input = TwoPhotonFockState::from_terms(4, &[(occ.clone(), C64::new(1.0, 0.0))]).expect("basis occupation");
        let out = two_photon_evolve(&u, &input).expect("four modes");
        for (i, a) in out.amplitudes().iter().enumerate() {
            t[(i, j)] = *a;
        }
    }
    let out2 = &t * rho2 * t.adjoint();
    let pair = (0..dim).map(|i| out2[(i, i)].re.max(0.0)).collect();
    ModeStatistics { single, pair }
}

fn poisson_pmf(mu: f64, j: u32) -> f64 {
    let mut p = (-mu).exp();
    for i in 1..=j {
        p *= mu / i as f64;
    }
    p
}

/// Click patterns of pulses with three or more photons. The photons of a
/// coherent pulse land independently, so each pattern follows by
/// inclusion-exclusion over the Poisson tail.
fn add_multi_photon_clicks(masks: &mut [f64; 16], single: &[f64; 4], s: f64, mu: f64) {
    let q: [f64; 4] = std::array::from_fn(|a| s * single[a]);
    let tail = |r: f64| {
        let m = mu * r;
        (-mu).exp() * (m.exp_m1() - m - 0.5 * m * m)
    };
    for (m, slot) in masks.iter_mut().enumerate() {
        let mut p = 0.0;
        // inclusion-exclusion over the subsets of the click pattern
        let mut t = m;
        loop {
            let r = 1.0 - s + (0..4).filter(|&k| t & (1 << k) != 0).map(|k| q[k]).sum::<f64>();
            let sign = if (m.count_ones() - t.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            p += sign * tail(r);
            if t == 0 {
                break;
            }
            t = (t - 1) & m;
        }
        *slot += p.max(0.0);
    }
}

/// Exact probabilities of every pulse outcome for input `x` under `drift`.
pub fn outcome_distribution(x: usize, drift: &DriftState, config: &CircuitConfig) -> OutcomeDistribution {
    let stats = mode_statistics(x, drift, config);
    let s = config.photon_detection_probability();
    let (p0, p1, p2) = (poisson_pmf(config.mu, 0), poisson_pmf(config.mu, 1), poisson_pmf(config.mu, 2));
    // photon click patterns as detector bitmasks
    let mut masks = [0.0f64; 16];
    masks[0] += p0 + p1 * (1.0 - s);
    for a in 0..4 {
        masks[1 << a] += p1 * s * stats.single[a];
    }
    for (occ, &p) in two_photon_basis(4).iter().zip(&stats.pair) {
        let modes: Vec<usize> = (0..4).filter(|&k| occ[k] > 0).collect();
        match modes[..] {
            [a] => {
                masks[1 << a] += p2 * p * (1.0 - (1.0 - s).powi(2));
                masks[0] += p2 * p * (1.0 - s).powi(2);
            }
            [a, b] => {
                masks[(1 << a) | (1 << b)] += p2 * p * s * s;
                masks[1 << a] += p2 * p * s * (1.0 - s);
                masks[1 << b] += p2 * p * s * (1.0 - s);
                masks[0] += p2 * p * (1.0 - s).powi(2);
            }
            _ => unreachable!("two photons occupy one or two modes"),
        }
    }
    let discard_photons = if config.multi_photon_clicks {
        add_multi_photon_clicks(&mut masks, &stats.single, s, config.mu);
        0.0
    } else {
        1.0 - p0 - p1 - p2
    };
    let d = config.dark_probability();
    if d > 0.0 {
        let mut dark = [0.0f64; 16];
        for (m, &p) in masks.iter().enumerate() {
            for extra in 0..16usize {
                let on = extra.count_ones() as i32;
                dark[m | extra] += p * d.powi(on) * (1.0 - d).powi(4 - on);
            }
        }
        masks = dark;
    }
    let mut clicks = [0.0; OUTCOMES];
    let mut discard = discard_photons;
    for (m, &p) in masks.iter().enumerate().skip(1) {
        let det: Vec<usize> = (0..4).filter(|&k| m & (1 << k) != 0).collect();
        match outcome_index(&det) {
            Some(a) => clicks[a] += p,
            None => discard += p,
        }
    }
    OutcomeDistribution {
        no_click: masks[0],
        clicks,
        discard,
    }
}

/// Simulates one pulse photon by photon.
pub fn propagate_and_detect(x: usize, drift: &DriftState, config: &CircuitConfig, rng: &mut impl Rng) -> Result<Outcome> {
    if x >= INPUTS {
        return Err(Error::invalid(format!("input {x} out of range 0..{INPUTS}")));
    }
    let j = sample_photon_number(config.mu, rng);
    if j >= 3 && !config.multi_photon_clicks {
        return Ok(Outcome::Discard);
    }
    let stats = mode_statistics(x, drift, config);
    let s = config.photon_detection_probability();
    let mut hit = [false; 4];
    let pick = |rng: &mut dyn rand::RngCore, weights: &[f64]| -> usize {
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if r < *w {
                return i;
            }
            r -= w;
        }
        weights.len() - 1
    };
    match j {
        1 => {
            let a = pick(rng, &stats.single);
            hit[a] |= rng.random::<f64>() < s;
        }
        2 => {
            let occ = &two_photon_basis(4)[pick(rng, &stats.pair)];
            for (k, &n) in occ.iter().enumerate() {
                for _ in 0..n {
                    hit[k] |= rng.random::<f64>() < s;
                }
            }
        }
        0 => {}
        _ => {
            for _ in 0..j {
                let a = pick(rng, &stats.single);
                hit[a] |= rng.random::<f64>() < s;
            }
        }
    }
    let d = config.dark_probability();
    for h in hit.iter_mut() {
        *h |= d > 0.0 && rng.random::<f64>() < d;
    }
    let det: Vec<usize> = (0..4).filter(|&k| hit[k]).collect();
    Ok(match (det.len(), outcome_index(&det)) {
        (0, _) => Outcome::NoClick,
        (_, Some(a)) => Outcome::Click(a),
        (_, None) => Outcome::Discard,
    })
}

/// Multinomial counts of `n` draws; sequential binomials keep it exact.
pub(crate) fn multinomial(n: u64, probs: &[f64], rng: &mut impl Rng) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = vec![0; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i == probs.len() - 1 {
            out[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 { left } else { Binomial::new(left, q).expect("valid binomial").sample(rng) };
        out[i] = k;
        left -= k;
        mass -= p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn single_photon_only(config: &CircuitConfig, x: usize, drift: &DriftState) -> [f64; 4] {
        let d = outcome_distribution(x, drift, config);
        let p = d.post_selected();
        [p[0], p[1], p[2], p[3]]
    }

    #[test]
    fn default_loss_budget() {
        let c = CircuitConfig::default();
        c.validate().unwrap();
        assert_abs_diff_eq!(c.transmission(), 0.43, epsilon = 0.005);
        assert_abs_diff_eq!(c.photon_detection_probability(), 0.043, epsilon = 0.0005);
        assert_eq!(c.rounds_per_block(), 200_000);
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = CircuitConfig::default();
        c.detector_efficiency = 1.5;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("detector_efficiency"), "{msg}");
        let mut c = CircuitConfig::default();
        c.mu = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("mu"));
    }

    #[test]
    fn ideal_basis_inputs_are_deterministic() {
        let mut c = CircuitConfig::ideal();
        c.mu = 1e-6;
        let z = DriftState::default();
        for x in 0..4 {
            let p = single_photon_only(&c, x, &z);
            for a in 0..4 {
                assert_abs_diff_eq!(p[a], if a == x { 1.0 } else { 0.0 }, epsilon = 1e-6);
            }
        }
        let p = single_photon_only(&c, 4, &z);
        for a in 0..4 {
            assert_abs_diff_eq!(p[a], 0.25, epsilon = 1e-6);
        }
    }

    #[test]
    fn distribution_is_normalized_and_bounded() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut c = CircuitConfig::default();
        c.dark_count_rate = 500.0;
        for _ in 0..20 {
            let drift = DriftState::new(std::array::from_fn(|_| rng.random_range(-PI..PI)));
            for x in 0..INPUTS {
                let d = outcome_distribution(x, &drift, &c);
                let total = d.no_click + d.click_probability() + d.discard;
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
                assert!(d.clicks.iter().all(|p| *p >= 0.0));
            }
        }
    }

    #[test]
    fn click_probability_respects_photon_bounds() {
        let mut c = CircuitConfig::default();
        let s = c.photon_detection_probability();
        let p1 = poisson_pmf(c.mu, 1);
        let p2 = poisson_pmf(c.mu, 2);
        let d = outcome_distribution(4, &DriftState::default(), &c);
        assert_abs_diff_eq!(d.click_probability(), p1 * s + p2 * (1.0 - (1.0 - s).powi(2)), epsilon = 1e-12);
        assert_abs_diff_eq!(d.discard, 1.0 - (0..3).map(|j| poisson_pmf(c.mu, j)).sum::<f64>(), epsilon = 1e-12);

        c.multi_photon_clicks = true;
        let d = outcome_distribution(4, &DriftState::default(), &c);
        // j photons fire something with probability 1 − (1 − s)^j; summed over Poisson j
        let any_click = 1.0 - (-c.mu * s).exp();
        assert_abs_diff_eq!(d.click_probability() + d.discard, any_click, epsilon = 1e-12);
        assert!(d.click_probability() > p1 * s + p2 * (1.0 - (1.0 - s).powi(2)));
    }

    #[test]
    fn count_rates_match_reported_order_of_magnitude() {
        let c = CircuitConfig::default();
        let w = c.input_weights();
        let (mut singles, mut pairs) = (0.0, 0.0);
        for x in 0..INPUTS {
            let d = outcome_distribution(x, &DriftState::default(), &c);
            singles += w[x] * d.clicks[..4].iter().sum::<f64>();
            pairs += w[x] * d.clicks[4..].iter().sum::<f64>();
        }
        let (singles, pairs) = (singles * c.repetition_rate, pairs * c.repetition_rate);
        assert!(singles > 25_000.0 && singles < 100_000.0, "{singles} singles/s");
        assert!(pairs > 45.0 && pairs < 180.0, "{pairs} coincidences/s");
    }

    #[test]
    fn triple_clicks_are_rare() {
        let mut c = CircuitConfig::default();
        c.multi_photon_clicks = true;
        let w = c.input_weights();
        let rate: f64 = (0..INPUTS)
            .map(|x| w[x] * outcome_distribution(x, &DriftState::default(), &c).discard)
            .sum::<f64>()
            * c.repetition_rate;
        assert!(rate > 0.05 && rate < 5.0, "{rate} triples/s");
    }

    #[test]
    fn per_pulse_sampling_matches_distribution() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut c = CircuitConfig::default();
        c.mu = 1.2;
        c.detector_efficiency = 0.9;
        c.other_transmission = 1.0;
        c.phase_jitter = 0.3;
        c.dark_count_rate = 2e4;
        let drift = DriftState::new([0.0, 0.4, -0.7, 1.1]);
        let n = 200_000;
        for (x, multi) in [(1, false), (4, false), (1, true), (4, true)] {
            c.multi_photon_clicks = multi;
            let exact = outcome_distribution(x, &drift, &c);
            let mut counts = [0u64; OUTCOMES + 2];
            for _ in 0..n {
                match propagate_and_detect(x, &drift, &c, &mut rng).unwrap() {
                    Outcome::NoClick => counts[OUTCOMES] += 1,
                    Outcome::Click(a) => counts[a] += 1,
                    Outcome::Discard => counts[OUTCOMES + 1] += 1,
                }
            }
            let mut expect = exact.clicks.to_vec();
            expect.push(exact.no_click);
            expect.push(exact.discard);
            for (k, &p) in expect.iter().enumerate() {
                let f = counts[k] as f64 / n as f64;
                assert!((f - p).abs() < 4.0 / (n as f64).sqrt(), "x {x} outcome {k}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn photon_number_statistics() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let n = 1_000_000u64;
        let (mut zero, mut three) = (0u64, 0u64);
        for _ in 0..n {
            match sample_photon_number(0.4, &mut rng) {
                0 => zero += 1,
                j if j >= 3 => three += 1,
                _ => {}
            }
        }
        let check = |count: u64, p: f64| {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((count as f64 / n as f64 - p).abs() < 3.0 * sd, "{count} vs {p}");
        };
        check(zero, (-0.4f64).exp());
        check(three, 1.0 - (0..3).map(|j| poisson_pmf(0.4, j)).sum::<f64>());
        assert_eq!(sample_photon_number(1e-12, &mut rng), 0);
    }

    #[test]
    fn drift_walk() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut c = CircuitConfig::default();
        c.drift_sigma = 0.0;
        let s = DriftState::new([0.1, 0.2, 0.3, 0.4]);
        assert_eq!(drift_step(&s, &c, &mut rng), s);

        c.drift_sigma = 0.01;
        let steps = 10_000;
        let mut cur = DriftState::default();
        let mut sq = 0.0;
        for _ in 0..steps {
            let next = drift_step(&cur, &c, &mut rng);
            sq += wrap_pi(next.noise[2] - cur.noise[2]).powi(2);
            cur = next;
        }
        let var = sq / steps as f64;
        // variance of a sample variance of normals is 2σ⁴/n
        let sd = (2.0 * 1e-8 / steps as f64).sqrt();
        assert!((var - 1e-4).abs() < 3.0 * sd, "{var}");

        assert_abs_diff_eq!(wrap_pi(PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_pi(PI), PI, epsilon = 1e-12);
    }

    #[test]
    fn multinomial_conserves_rounds() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let c = multinomial(1000, &[0.2, 0.0, 0.5, 0.3], &mut rng);
        assert_eq!(c.iter().sum::<u64>(), 1000);
        assert_eq!(c[1], 0);
    }
}
