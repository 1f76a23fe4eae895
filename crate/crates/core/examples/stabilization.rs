//! Perturb-and-observe realignment from random drifts, judged by the fringe
//! visibility before and after.
//!
//! cargo run --release --example stabilization -- [trials]

use std::f64::consts::PI;

use qil::sim::{fringe_scan, stabilize, substream, CircuitConfig, DriftState, Probe, Substream};
use rand::Rng;

fn main() -> qil::Result<()> {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let config = CircuitConfig::default();
    let mut rng = substream(config.seed, Substream::Controller);
    let phases: Vec<f64> = (0..33).map(|i| 2.0 * PI * i as f64 / 32.0).collect();
    let aligned = fringe_scan(&config, &DriftState::default(), &phases, None, &mut rng)?;
    println!("aligned visibility {:.4}", aligned.average_visibility());
    println!("trial  before   after  sweeps  probe rounds  residual (rad)");
    for i in 0..trials {
        let start = DriftState::new(std::array::from_fn(|_| rng.random_range(-PI..PI)));
        let (fixed, report) = stabilize(&start, &config, Probe::Sampled, &mut rng);
        let before = fringe_scan(&config, &start, &phases, None, &mut rng)?.average_visibility();
        let after = fringe_scan(&config, &fixed, &phases, None, &mut rng)?.average_visibility();
        let r = fixed.residual();
        println!(
            "{i:>5}  {before:.4}  {after:.4}  {:>6}  {:>12}  [{:+.3}, {:+.3}, {:+.3}]",
            report.sweeps, report.probe_rounds, r[0], r[1], r[2]
        );
    }
    Ok(())
}
