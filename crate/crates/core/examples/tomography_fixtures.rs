//! Projects the published 4×4 and 7×7 experimental matrices onto real-border
//! unitaries and compares them with the printed estimates.
//!
//! cargo run --release --example tomography_fixtures

use qil::linops::matrix_fidelity;
use qil::tomography::{fixture, ProjectionMode, ProjectionOptions, TomographyResult, FIXTURE_NAMES};

fn main() -> qil::Result<()> {
    for name in FIXTURE_NAMES {
        let fx = fixture(name)?;
        for mode in [ProjectionMode::Constrained, ProjectionMode::PolarThenGauge] {
            let opts = ProjectionOptions { mode, ..Default::default() };
            let t0 = std::time::Instant::now();
            let mut result = TomographyResult::from_experimental(fx.experimental.clone(), &opts)?;
            let elapsed = t0.elapsed();
            println!("{name} {mode:?} ({elapsed:.2?})");
            println!("  F(U~, U^)            = {:.5}", result.fidelity_exp_unitary);
            println!(
                "  F(U~, printed U^)    = {:.5}",
                matrix_fidelity(&fx.experimental, &fx.reference_unitary)?
            );
            println!(
                "  max |U^ - printed U^| = {:.4}",
                result.unitary.matrix().max_abs_diff(&fx.reference_unitary)
            );
            if let Some(model) = &fx.model {
                let cmp = result.compare_with(model)?;
                println!("  F(U^, model)         = {:.5} with output order {:?}", cmp.fidelity, cmp.output_order);
            }
        }
    }
    Ok(())
}
