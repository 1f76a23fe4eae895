//! Error propagation by resampling intensities and phases.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble_experimental_matrix, project_to_unitary, split_ratios, IntensityTable, ProjectionOptions};
use crate::error::{Error, Result};
use crate::linops::{matrix_fidelity, ComplexMatrix};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloOptions {
    pub samples: usize,
    pub seed: u64,
    /// Projection settings for every draw; restarts are usually unnecessary
    /// because each draw starts next to the point estimate.
    pub projection: ProjectionOptions,
    pub parallel: bool,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0x6d63,
            projection: ProjectionOptions {
                restarts: 0,
                ..ProjectionOptions::default()
            },
            parallel: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub three_sigma: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            three_sigma: 3.0 * var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub samples: usize,
    /// Draws discarded because they produced a singular or empty matrix.
    pub rejected: usize,
    pub fidelity_exp_unitary: Estimate,
    /// Fidelity of each draw's unitary estimate with the model, if one was given.
    pub fidelity_model: Option<Estimate>,
}

/// Resamples `I ~ N(I, ΔI/3)` and `φ ~ N(φ, Δφ/3)`, reruns assembly and
/// projection per draw, and reports means with 3σ half-widths.
///
/// `phases` holds real-border phases; border entries are ignored. When a model
/// is supplied, each draw's rows are reordered by `output_order` before the
/// comparison. Draw `i` uses its own random stream, so results do not depend
/// on scheduling.
pub fn monte_carlo_errors(
    table: &IntensityTable,
    phases: &DMatrix<f64>,
    phase_errors: &DMatrix<f64>,
    model: Option<(&ComplexMatrix, &[usize])>,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloReport> {
    let n = table.dim();
    if phases.shape() != (n, n) || phase_errors.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phases.nrows(),
        });
    }
    if opts.samples < 100 {
        return Err(Error::invalid(format!("Monte Carlo needs at least 100 samples, got {}", opts.samples)));
    }
    if phase_errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::invalid("phase errors must be finite and non-negative"));
    }

    let draw = |i: usize| -> Result<(f64, Option<f64>, usize)> {
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let mut rejected = 0;
        loop {
            let intens = DMatrix::from_fn(n, n, |j, k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (table.values()[(j, k)] + z * table.errors()[(j, k)] / 3.0).max(0.0)
            });
            let ph = DMatrix::from_fn(n, n, |j, k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (j > 0 && k > 0).then(|| phases[(j, k)] + z * phase_errors[(j, k)] / 3.0)
            });
            let attempt = IntensityTable::without_errors(intens)
                .and_then(|t| split_ratios(&t))
                .and_then(|(_, u)| assemble_experimental_matrix(&u, &ph))
                .and_then(|exp| project_to_unitary(&exp, &opts.projection).map(|p| (exp, p)));
            match attempt {
                Ok((exp, proj)) => {
                    let f_exp = matrix_fidelity(&exp, proj.unitary.matrix())?;
                    let f_model = match model {
                        Some((m, order)) => Some(matrix_fidelity(&proj.unitary.matrix().permute_rows(order)?, m)?),
                        None => None,
                    };
                    return Ok((f_exp, f_model, rejected));
                }
                Err(Error::Singular(_)) | Err(Error::InvalidInput(_)) if rejected < 1000 => rejected += 1,
                Err(e) => return Err(e),
            }
        }
    };

    let results: Vec<Result<(f64, Option<f64>, usize)>> = if opts.parallel {
        (0..opts.samples).into_par_iter().map(draw).collect()
    } else {
        (0..opts.samples).map(draw).collect()
    };
    let mut f_exp = Vec::with_capacity(opts.samples);
    let mut f_model = Vec::with_capacity(opts.samples);
    let mut rejected = 0;
    for r in results {
        let (a, b, rej) = r?;
        f_exp.push(a);
        f_model.extend(b);
        rejected += rej;
    }
    Ok(MonteCarloReport {
        samples: opts.samples,
        rejected,
        fidelity_exp_unitary: Estimate::from_samples(&f_exp),
        fidelity_model: model.map(|_| Estimate::from_samples(&f_model)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::symmetric_bs_4;
    use crate::tomography::ProjectionMode;

    fn bs_inputs(di: f64, dphi: f64) -> (IntensityTable, DMatrix<f64>, DMatrix<f64>) {
        let v = symmetric_bs_4(0.0);
        let vals = DMatrix::from_fn(4, 4, |j, k| v.get(j, k).norm_sqr());
        let table = IntensityTable::new(vals, DMatrix::from_element(4, 4, di)).unwrap();
        let phases = DMatrix::from_fn(4, 4, |j, k| super::super::wrap_2pi(v.get(j, k).arg()));
        (table, phases, DMatrix::from_element(4, 4, dphi))
    }

    fn opts(samples: usize) -> MonteCarloOptions {
        MonteCarloOptions {
            samples,
            projection: ProjectionOptions {
                mode: ProjectionMode::PolarThenGauge,
                restarts: 0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_errors_collapse_to_point_estimate() {
        let (t, p, e) = bs_inputs(0.0, 0.0);
        let v = symmetric_bs_4(0.0);
        let order = [0, 1, 2, 3];
        let r = monte_carlo_errors(&t, &p, &e, Some((v.matrix(), &order)), &opts(100)).unwrap();
        assert_eq!(r.fidelity_exp_unitary.three_sigma, 0.0);
        assert!((r.fidelity_exp_unitary.mean - 1.0).abs() < 1e-12);
        assert!((r.fidelity_model.unwrap().mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wider_errors_do_not_shrink_spread() {
        let v = symmetric_bs_4(0.0);
        let order = [0, 1, 2, 3];
        let (t1, p1, e1) = bs_inputs(0.01, 0.05);
        let (t2, p2, e2) = bs_inputs(0.02, 0.10);
        let r1 = monte_carlo_errors(&t1, &p1, &e1, Some((v.matrix(), &order)), &opts(400)).unwrap();
        let r2 = monte_carlo_errors(&t2, &p2, &e2, Some((v.matrix(), &order)), &opts(400)).unwrap();
        let (s1, s2) = (r1.fidelity_model.unwrap().three_sigma, r2.fidelity_model.unwrap().three_sigma);
        assert!(s2 >= s1, "{s2} < {s1}");
    }

    #[test]
    fn deterministic_regardless_of_threading() {
        let (t, p, e) = bs_inputs(0.01, 0.05);
        let mut o = opts(120);
        let a = monte_carlo_errors(&t, &p, &e, None, &o).unwrap();
        o.parallel = false;
        let b = monte_carlo_errors(&t, &p, &e, None, &o).unwrap();
        assert_eq!(a.fidelity_exp_unitary, b.fidelity_exp_unitary);
    }

    #[test]
    fn too_few_samples_rejected() {
        let (t, p, e) = bs_inputs(0.0, 0.0);
        assert!(monte_carlo_errors(&t, &p, &e, None, &opts(10)).is_err());
    }
}
