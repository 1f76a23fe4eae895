//! Monte Carlo error bars for the 4×4 device: intensities and phases are
//! resampled around the published experimental matrix and every draw is
//! pushed through assembly and projection again.
//!
//! cargo run --release --example tomography_montecarlo -- [samples]

use nalgebra::DMatrix;
use qil::tomography::{
    fixture, monte_carlo_errors, wrap_2pi, IntensityTable, MonteCarloOptions, ProjectionOptions, TomographyResult,
};

fn main() -> qil::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let fx = fixture("paper-4x4")?;
    let exp = &fx.experimental;
    let n = exp.nrows();
    let mut point = TomographyResult::from_experimental(exp.clone(), &ProjectionOptions::default())?;
    let model = fx.model.clone().expect("4x4 fixture has a model");
    let order = point.compare_with(&model)?.output_order.clone();

    let table = IntensityTable::new(
        DMatrix::from_fn(n, n, |j, k| exp.get(j, k).norm_sqr()),
        DMatrix::from_element(n, n, fx.intensity_error),
    )?;
    let phases = DMatrix::from_fn(n, n, |j, k| wrap_2pi(exp.get(j, k).arg()));
    let phase_errors = DMatrix::from_element(n, n, fx.phase_error);
    let opts = MonteCarloOptions { samples, ..Default::default() };
    let t0 = std::time::Instant::now();
    let report = monte_carlo_errors(&table, &phases, &phase_errors, Some((&model, &order)), &opts)?;
    let fm = report.fidelity_model.expect("model given");
    println!("{samples} draws in {:.1?} ({} rejected)", t0.elapsed(), report.rejected);
    println!(
        "F(U~, U^)   = {:.4} ± {:.4}",
        report.fidelity_exp_unitary.mean, report.fidelity_exp_unitary.three_sigma
    );
    println!("F(U^, V_0)  = {:.4} ± {:.4}", fm.mean, fm.three_sigma);
    Ok(())
}
