//! Two-photon components of the preparation states sent through the
//! symmetric 4×4 beamsplitter: bunching statistics and the detector patterns
//! they leave behind.
//!
//! cargo run --release --example two_photon

use qil::linops::{symmetric_bs_4, two_photon_basis, two_photon_evolve, TwoPhotonFockState};
use qil::mdi::{outcome_index, outcome_label, two_photon_state_4, TwoPhotonVariant, OUTCOMES};

fn main() -> qil::Result<()> {
    let u = symmetric_bs_4(0.0);
    let basis = two_photon_basis(4);
    let mut inputs = vec![("|2,0,0,0>".to_string(), TwoPhotonFockState::double(4, 0))];
    for v in [TwoPhotonVariant::Paper, TwoPhotonVariant::Bosonic] {
        inputs.push((format!("omega_4 {v:?}"), two_photon_state_4(v)));
    }
    for (name, state) in &inputs {
        let out = two_photon_evolve(&u, state)?;
        let probs = out.probabilities();
        let bunched: f64 = basis.iter().zip(&probs).filter(|(o, _)| o.contains(&2)).map(|(_, p)| p).sum();
        println!("{name}: P(both photons in one output) = {bunched:.4}");

        // threshold detectors only see which outputs fired
        let mut clicks = [0.0; OUTCOMES];
        for (occ, p) in basis.iter().zip(&probs) {
            let fired: Vec<usize> = (0..4).filter(|&k| occ[k] > 0).collect();
            clicks[outcome_index(&fired).expect("one or two detectors")] += p;
        }
        let row: Vec<String> = clicks
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 1e-12)
            .map(|(a, p)| format!("{}:{p:.3}", outcome_label(a)))
            .collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
