//! Block-wise protocol runs with realignment and zone bookkeeping.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{drift_step, substream, multinomial, outcome_distribution, stabilize, track, CircuitConfig, DriftState, Probe, StabilizationReport, Substream};
use crate::error::{Error, Result};
use crate::mdi::{FrequencyTable, INPUTS, OUTCOMES};

/// Tallies of one integration block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub index: usize,
    /// Start time (s).
    pub time: f64,
    /// Pulses sent per input.
    pub rounds: [u64; INPUTS],
    /// Certified click outcomes, `counts[x][a]`.
    pub counts: [[u64; OUTCOMES]; INPUTS],
    pub no_click: [u64; INPUTS],
    /// Pulses flagged as discards: three or more photons, or three or more clicks.
    pub discards: [u64; INPUTS],
    /// Success probability over the decision window, if any basis input clicked.
    pub p_bar: Option<f64>,
    pub window_blocks: usize,
    pub accepted: bool,
    /// Measured while the controller settles after a realignment; never recorded.
    pub settling: bool,
}

impl BlockRecord {
    /// Detected rounds per input.
    pub fn detected(&self) -> [u64; INPUTS] {
        self.counts.map(|c| c.iter().sum())
    }

    /// `p(x|ρ_x)` numerator and denominator for the basis inputs.
    fn basis_tallies(&self) -> [(u64, u64); 4] {
        std::array::from_fn(|x| (self.counts[x][x], self.counts[x].iter().sum()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Realignment {
    /// Block after which the controller realigned.
    pub block: usize,
    pub time: f64,
    pub report: StabilizationReport,
}

/// A maximal run of recorded blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub index: usize,
    pub first_block: usize,
    pub last_block: usize,
    /// Outcome-by-input counts.
    pub counts: DMatrix<u64>,
    pub p_bar: f64,
}

impl Zone {
    pub fn blocks(&self) -> usize {
        self.last_block - self.first_block + 1
    }

    pub fn table(&self) -> Result<FrequencyTable> {
        FrequencyTable::from_counts(&self.counts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub block_length: f64,
    pub blocks: Vec<BlockRecord>,
    pub zones: Vec<Zone>,
    pub realignments: Vec<Realignment>,
    pub final_drift: DriftState,
}

fn p_bar_of(tallies: impl Iterator<Item = [(u64, u64); 4]>) -> Option<f64> {
    let mut hit = [0u64; 4];
    let mut total = [0u64; 4];
    for t in tallies {
        for x in 0..4 {
            hit[x] += t[x].0;
            total[x] += t[x].1;
        }
    }
    let rates: Vec<f64> = (0..4).filter(|&x| total[x] > 0).map(|x| hit[x] as f64 / total[x] as f64).collect();
    if rates.is_empty() {
        None
    } else {
        Some(rates.iter().sum::<f64>() / rates.len() as f64)
    }
}

fn counts_matrix<'a>(blocks: impl Iterator<Item = &'a BlockRecord>) -> DMatrix<u64> {
    let mut m = DMatrix::zeros(OUTCOMES, INPUTS);
    for b in blocks {
        for x in 0..INPUTS {
            for a in 0..OUTCOMES {
                m[(a, x)] += b.counts[x][a];
            }
        }
    }
    m
}

impl RunLog {
    pub fn accepted_blocks(&self) -> impl Iterator<Item = &BlockRecord> {
        self.blocks.iter().filter(|b| b.accepted)
    }

    /// `p̄` pooled over every recorded block.
    pub fn overall_p_bar(&self) -> Option<f64> {
        p_bar_of(self.accepted_blocks().map(|b| b.basis_tallies()))
    }

    /// Counts of all recorded blocks, outcome-by-input.
    pub fn pooled_counts(&self) -> DMatrix<u64> {
        counts_matrix(self.accepted_blocks())
    }

    pub fn pooled_table(&self) -> Result<FrequencyTable> {
        FrequencyTable::from_counts(&self.pooled_counts())
    }

    /// Recorded time (s).
    pub fn accepted_time(&self) -> f64 {
        self.accepted_blocks().count() as f64 * self.block_length
    }

    pub fn total_discards(&self) -> u64 {
        self.blocks.iter().map(|b| b.discards.iter().sum::<u64>()).sum()
    }

    /// Success probability recomputed from the tallies of a block's window.
    pub fn recompute_p_bar(&self, index: usize) -> Option<f64> {
        let b = &self.blocks[index];
        let start = index + 1 - b.window_blocks;
        p_bar_of(self.blocks[start..=index].iter().map(|b| b.basis_tallies()))
    }
}

fn zones_of(blocks: &[BlockRecord]) -> Vec<Zone> {
    let mut zones = Vec::new();
    let mut i = 0;
    while i < blocks.len() {
        if !blocks[i].accepted {
            i += 1;
            continue;
        }
        let start = i;
        while i < blocks.len() && blocks[i].accepted {
            i += 1;
        }
        let run = &blocks[start..i];
        zones.push(Zone {
            index: zones.len(),
            first_block: start,
            last_block: i - 1,
            counts: counts_matrix(run.iter()),
            p_bar: p_bar_of(run.iter().map(|b| b.basis_tallies())).unwrap_or(0.0),
        });
    }
    zones
}

/// Runs the protocol for `duration` seconds of pulses.
///
/// The interferometer starts aligned. Blocks are recorded while the windowed
/// success probability strictly exceeds the threshold; at every check a
/// failed block triggers realignment followed by a settling period, and
/// otherwise the controller makes one tracking pass.
pub fn run_protocol(config: &CircuitConfig, duration: f64) -> Result<RunLog> {
    config.validate()?;
    if !(duration >= config.block_length) || !duration.is_finite() {
        return Err(Error::config(
            "duration",
            format!("must cover at least one {} s block, got {duration}", config.block_length),
        ));
    }
    let mut drift_rng = substream(config.seed, Substream::Drift);
    let mut rng = substream(config.seed, Substream::Sampling);
    let mut control_rng = substream(config.seed, Substream::Controller);
    let n_blocks = (duration / config.block_length + 1e-9).floor() as usize;
    let check_every = ((config.check_interval / config.block_length).round() as usize).max(1);
    let pulses = config.rounds_per_block();
    let weights = config.input_weights();

    let mut drift = DriftState::default();
    let mut next_drift_time = config.drift_interval;
    let mut window: VecDeque<[(u64, u64); 4]> = VecDeque::new();
    let mut settle = config.stabilizer.settle_blocks;
    let mut failed_since_check = false;
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut realignments = Vec::new();

    for index in 0..n_blocks {
        let time = index as f64 * config.block_length;
        let end = time + config.block_length;
        while next_drift_time <= end + 1e-12 {
            drift = drift_step(&drift, config, &mut drift_rng);
            next_drift_time += config.drift_interval;
        }

        let rounds_v = multinomial(pulses, &weights, &mut rng);
        let mut rec = BlockRecord {
            index,
            time,
            rounds: std::array::from_fn(|x| rounds_v[x]),
            counts: [[0; OUTCOMES]; INPUTS],
            no_click: [0; INPUTS],
            discards: [0; INPUTS],
            p_bar: None,
            window_blocks: 0,
            accepted: false,
            settling: settle > 0,
        };
        for x in 0..INPUTS {
            let d = outcome_distribution(x, &drift, config);
            let mut probs = d.clicks.to_vec();
            probs.push(d.no_click);
            probs.push(d.discard);
            let tally = multinomial(rec.rounds[x], &probs, &mut rng);
            rec.counts[x].copy_from_slice(&tally[..OUTCOMES]);
            rec.no_click[x] = tally[OUTCOMES];
            rec.discards[x] = tally[OUTCOMES + 1];
        }

        window.push_back(rec.basis_tallies());
        if window.len() > config.success_window_blocks {
            window.pop_front();
        }
        rec.window_blocks = window.len();
        rec.p_bar = p_bar_of(window.iter().cloned());
        if settle > 0 {
            settle -= 1;
        } else {
            rec.accepted = rec.p_bar.is_some_and(|p| p > config.success_threshold);
            failed_since_check |= !rec.accepted;
        }
        blocks.push(rec);

        if (index + 1) % check_every == 0 {
            if failed_since_check {
                let (aligned, report) = stabilize(&drift, config, Probe::Sampled, &mut control_rng);
                log::debug!("realigned after block {index}: {} steps", report.iterations);
                drift = aligned;
                realignments.push(Realignment {
                    block: index,
                    time: end,
                    report,
                });
                window.clear();
                settle = config.stabilizer.settle_blocks;
                failed_since_check = false;
            } else if config.stabilizer.tracking && settle == 0 {
                drift = track(&drift, config, &mut control_rng);
            }
        }
    }
    let zones = zones_of(&blocks);
    Ok(RunLog {
        block_length: config.block_length,
        blocks,
        zones,
        realignments,
        final_drift: drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_run_is_one_perfect_zone() {
        let log = run_protocol(&CircuitConfig::ideal(), 1.0).unwrap();
        assert_eq!(log.blocks.len(), 10);
        assert_eq!(log.zones.len(), 1);
        assert!(log.blocks.iter().all(|b| b.accepted));
        assert_eq!(log.overall_p_bar(), Some(1.0));
        assert!(log.realignments.is_empty());
    }

    #[test]
    fn durations_shorter_than_a_block_are_rejected() {
        let c = CircuitConfig::ideal();
        for d in [0.0, 0.05, -1.0, f64::NAN, f64::INFINITY] {
            assert!(run_protocol(&c, d).is_err(), "{d}");
        }
        assert_eq!(run_protocol(&c, 0.1).unwrap().blocks.len(), 1);
    }

    #[test]
    fn tallies_are_conserved_and_reproducible() {
        let mut c = CircuitConfig::default();
        c.drift_sigma = 0.05;
        c.stabilizer.settle_blocks = 5;
        c.success_window_blocks = 5;
        let a = run_protocol(&c, 4.0).unwrap();
        let b = run_protocol(&c, 4.0).unwrap();
        assert_eq!(a, b);
        for blk in &a.blocks {
            assert_eq!(blk.rounds.iter().sum::<u64>(), c.rounds_per_block());
            for x in 0..INPUTS {
                let sum: u64 = blk.counts[x].iter().sum::<u64>() + blk.no_click[x] + blk.discards[x];
                assert_eq!(sum, blk.rounds[x]);
            }
            assert_eq!(blk.p_bar, a.recompute_p_bar(blk.index));
            if !blk.settling {
                assert_eq!(blk.accepted, blk.p_bar.unwrap() > c.success_threshold);
            }
        }
    }

    #[test]
    fn strong_drift_without_tracking_forces_realignments() {
        let mut c = CircuitConfig::default();
        c.drift_sigma = 0.08;
        c.stabilizer.tracking = false;
        c.stabilizer.settle_blocks = 2;
        c.success_window_blocks = 2;
        let log = run_protocol(&c, 20.0).unwrap();
        assert!(!log.realignments.is_empty());
        assert!(log.zones.len() >= 2);
        for z in &log.zones {
            assert!(log.blocks[z.first_block..=z.last_block].iter().all(|b| b.accepted));
        }
    }
}
