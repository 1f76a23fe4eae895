//! The command layer end to end: simulate into a directory, certify the run
//! log it wrote, then rerun the simulation from its manifest and compare.
//!
//! cargo run --release --example pipeline -- [dir]

use std::path::PathBuf;

use qil::commands::{rerun, run, CertifyArgs, CertifyInput, Invocation, SimulateArgs};
use qil::mdi::TwoPhotonVariant;
use qil::sim::CircuitConfig;

fn main() -> qil::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "qil-pipeline".into()));
    let config = CircuitConfig::default();
    let sim = Invocation::Simulate(SimulateArgs {
        config: config.clone(),
        duration: 30.0,
        out: dir.join("sim"),
    });
    print!("{}", run(&sim)?.report);

    let cert = Invocation::Certify(CertifyArgs {
        input: CertifyInput::RunLog(dir.join("sim/runlog.jsonl")),
        mu: config.mu,
        epsilon: config.epsilon,
        target: 4,
        variant: TwoPhotonVariant::Paper,
        exact: false,
        out: dir.join("cert"),
    });
    print!("{}", run(&cert)?.report);

    rerun(&dir.join("sim/manifest.json"), Some(dir.join("again")))?;
    let same = std::fs::read(dir.join("sim/runlog.jsonl"))? == std::fs::read(dir.join("again/runlog.jsonl"))?;
    println!("rerun from manifest identical: {same}");
    Ok(())
}
