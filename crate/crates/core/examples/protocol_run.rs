//! A few simulated minutes of the randomness protocol: drift, realignment,
//! zones, then min-entropy per zone.
//!
//! cargo run --release --example protocol_run -- [seconds]

use qil::commands::{certify_runlog, summarize, CertifyArgs, CertifyInput};
use qil::mdi::TwoPhotonVariant;
use qil::sim::{run_protocol, CircuitConfig};

fn main() -> qil::Result<()> {
    let duration: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600.0);
    let mut config = CircuitConfig::default();
    // a livelier drift than the default, so realignments show up
    config.drift_sigma = 0.02;
    let log = run_protocol(&config, duration)?;
    let summary = summarize(&log, duration);
    println!(
        "{} blocks, {} accepted, {} realignments, singles {:.0}/s, coincidences {:.1}/s, discards {}",
        summary.blocks,
        summary.accepted_blocks,
        summary.realignments,
        summary.singles_rate,
        summary.coincidence_rate,
        summary.discards
    );
    let args = CertifyArgs {
        input: CertifyInput::RunLog(Default::default()),
        mu: config.mu,
        epsilon: config.epsilon,
        target: 4,
        variant: TwoPhotonVariant::Paper,
        exact: false,
        out: Default::default(),
    };
    let (certs, total) = certify_runlog(&log, &args)?;
    for (zone, cert) in summary.zones.iter().zip(&certs) {
        println!(
            "zone {:>2}: {:>6.1} s, p = {:.5}, H_min = {:.4} (bound {:.4})",
            zone.index, zone.blocks as f64 * config.block_length, zone.p_bar, cert.h_min, cert.theoretical_bound
        );
    }
    if let Some(t) = total {
        println!("mean H_min {:.4}, {:.0} bits/s", t.mean_h_min, t.bits_per_second);
    }
    Ok(())
}
