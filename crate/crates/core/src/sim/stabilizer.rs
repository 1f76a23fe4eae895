//! Perturb-and-observe phase stabilization.
//!
//! Input `x = 0` interferes constructively at D0 only when the measurement
//! phases of all arms agree, so the controller climbs the D0 share of
//! detected `x = 0` rounds one modulator at a time (modulator 0 is the
//! reference).

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{outcome_distribution, wrap_pi, CircuitConfig, DriftState};

/// How the controller reads the D0 share.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Probe {
    /// Exact expected share.
    Noiseless,
    /// Binomial estimate from `stabilizer.probe_rounds` detected rounds.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    /// Accepted perturbations.
    pub iterations: usize,
    pub sweeps: usize,
    pub converged: bool,
    /// D0 share at the end (as estimated by the probe).
    pub d0_fraction: f64,
    /// Detected probe rounds consumed.
    pub probe_rounds: u64,
}

/// Expected D0 share of detected `x = 0` rounds.
pub fn d0_fraction(drift: &DriftState, config: &CircuitConfig) -> f64 {
    let d = outcome_distribution(0, drift, config);
    d.clicks[0] / d.click_probability()
}

struct Meter<'a, R> {
    config: &'a CircuitConfig,
    probe: Probe,
    rng: &'a mut R,
    rounds: u64,
}

impl<R: Rng> Meter<'_, R> {
    fn read(&mut self, drift: &DriftState) -> f64 {
        let f = d0_fraction(drift, self.config);
        match self.probe {
            Probe::Noiseless => f,
            Probe::Sampled => {
                let n = self.config.stabilizer.probe_rounds;
                self.rounds += n;
                let k = Binomial::new(n, f.clamp(0.0, 1.0)).expect("valid binomial").sample(self.rng);
                k as f64 / n as f64
            }
        }
    }
}

/// One perturbation of modulator `k` in direction `dir`; kept if the fresh
/// reading beats a fresh reading of the current setting.
fn perturb<R: Rng>(drift: &mut DriftState, k: usize, dir: f64, meter: &mut Meter<'_, R>) -> (bool, f64) {
    let here = meter.read(drift);
    let mut trial = *drift;
    trial.bias[k] = wrap_pi(trial.bias[k] + dir * meter.config.stabilizer.step);
    let there = meter.read(&trial);
    if there > here {
        *drift = trial;
        (true, there)
    } else {
        (false, here)
    }
}

/// Realigns the bias phases until the D0 share is within tolerance of its
/// aligned value or no single step improves it.
pub fn stabilize(drift: &DriftState, config: &CircuitConfig, probe: Probe, rng: &mut impl Rng) -> (DriftState, StabilizationReport) {
    let cfg = &config.stabilizer;
    let target = (1.0 - cfg.tolerance) * d0_fraction(&DriftState::default(), config);
    let mut state = *drift;
    let mut meter = Meter {
        config,
        probe,
        rng,
        rounds: 0,
    };
    let mut current = meter.read(&state);
    let mut iterations = 0;
    let mut sweeps = 0;
    while current < target && sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for k in 1..4 {
            for dir in [1.0, -1.0] {
                let mut went = false;
                // keep stepping while it pays off
                for _ in 0..cfg.max_sweeps {
                    let (ok, f) = perturb(&mut state, k, dir, &mut meter);
                    current = f;
                    if !ok {
                        break;
                    }
                    went = true;
                    iterations += 1;
                }
                if went {
                    moved = true;
                    break;
                }
            }
        }
        if !moved && probe == Probe::Noiseless {
            break;
        }
    }
    let converged = current >= target;
    if !converged {
        log::warn!("stabilization stopped after {sweeps} sweeps at D0 share {current:.4}");
    }
    let report = StabilizationReport {
        iterations,
        sweeps,
        converged,
        d0_fraction: current,
        probe_rounds: meter.rounds,
    };
    (state, report)
}

/// One tracking pass: a single perturb-and-observe step on each modulator.
pub fn track(drift: &DriftState, config: &CircuitConfig, rng: &mut impl Rng) -> DriftState {
    let mut state = *drift;
    let mut meter = Meter {
        config,
        probe: Probe::Sampled,
        rng,
        rounds: 0,
    };
    for k in 1..4 {
        let dir = if meter.rng.random::<bool>() { 1.0 } else { -1.0 };
        let (ok, _) = perturb(&mut state, k, dir, &mut meter);
        if !ok {
            perturb(&mut state, k, -dir, &mut meter);
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fringe_scan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::f64::consts::PI;

    #[test]
    fn aligned_state_needs_no_work() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let c = CircuitConfig::default();
        let (s, r) = stabilize(&DriftState::default(), &c, Probe::Noiseless, &mut rng);
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(s, DriftState::default());
    }

    #[test]
    fn noiseless_climb_cancels_known_drift() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut c = CircuitConfig::default();
        c.stabilizer.tolerance = 0.0;
        c.stabilizer.step = 0.01;
        let drift = DriftState::new([0.0, 0.5, -0.3, 0.2]);
        let (s, r) = stabilize(&drift, &c, Probe::Noiseless, &mut rng);
        for k in 1..4 {
            assert!((s.bias[k] + drift.noise[k]).abs() <= 1.5 * c.stabilizer.step, "arm {k}: {:?}", s);
        }
        assert!(r.iterations > 0);
    }

    #[test]
    fn sampled_stabilization_restores_visibility() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let c = CircuitConfig::default();
        let phases: Vec<f64> = (0..16).map(|i| 2.0 * PI * i as f64 / 15.0).collect();
        let mut good = 0;
        for _ in 0..20 {
            let drift = DriftState::new(std::array::from_fn(|_| rng.random_range(-PI..PI)));
            let (s, _) = stabilize(&drift, &c, Probe::Sampled, &mut rng);
            let v = fringe_scan(&c, &s, &phases, None, &mut rng).unwrap().average_visibility();
            good += (v >= 0.99) as usize;
        }
        assert!(good >= 19, "{good}/20");
    }
}
