//! Process tomography of multi-port beamsplitters.
//!
//! Magnitudes come from single-input split ratios, phases from two-input
//! fringe scans, and the resulting experimental matrix is projected onto the
//! closest real-border unitary.

mod fixtures;
mod montecarlo;
mod projection;

pub use fixtures::{fixture, Fixture, FIXTURE_NAMES};
pub use montecarlo::{monte_carlo_errors, Estimate, MonteCarloOptions, MonteCarloReport};
pub use projection::{project_to_unitary, real_border_gauge, Projection, ProjectionMode, ProjectionOptions};

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{best_output_relabeling, ComplexMatrix, UnitaryMatrix, C64};

/// Fringe amplitude below which a phase fit is rejected.
pub const MIN_FRINGE_AMPLITUDE: f64 = 1e-6;
/// Minimum samples per phase scan.
pub const MIN_SCAN_SAMPLES: usize = 8;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_2pi(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_2pi(a - b);
    d.min(TAU - d)
}

/// Detected intensity `I[j][k]` at output `j` for light injected at input `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityTable {
    values: DMatrix<f64>,
    errors: DMatrix<f64>,
}

impl IntensityTable {
    pub fn new(values: DMatrix<f64>, errors: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() || values.nrows() == 0 {
            return Err(Error::invalid("intensity table must be square and non-empty"));
        }
        if errors.shape() != values.shape() {
            return Err(Error::DimensionMismatch {
                expected: values.nrows(),
                got: errors.nrows(),
            });
        }
        if values.iter().chain(errors.iter()).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("intensities and errors must be finite and non-negative"));
        }
        Ok(Self { values, errors })
    }

    pub fn without_errors(values: DMatrix<f64>) -> Result<Self> {
        let errors = DMatrix::zeros(values.nrows(), values.ncols());
        Self::new(values, errors)
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn errors(&self) -> &DMatrix<f64> {
        &self.errors
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub phase: f64,
    pub probability: f64,
    pub error: f64,
}

/// Output-port probabilities for input `(|0⟩ + e^{iϕ}|pair⟩)/√2` as `ϕ` is scanned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    pub pair: usize,
    pub output: usize,
    pub samples: Vec<ScanSample>,
}

impl PhaseScan {
    pub fn validate(&self) -> Result<()> {
        validate_scan_phases(self.samples.iter().map(|s| s.phase))?;
        if self
            .samples
            .iter()
            .any(|s| !(0.0..=1.0).contains(&s.probability) || !s.error.is_finite() || s.error < 0.0)
        {
            return Err(Error::invalid("scan probabilities must lie in [0, 1] with non-negative errors"));
        }
        Ok(())
    }
}

pub(crate) fn validate_scan_phases(phases: impl Iterator<Item = f64>) -> Result<()> {
    let (mut n, mut lo, mut hi) = (0usize, f64::INFINITY, f64::NEG_INFINITY);
    for p in phases {
        if !p.is_finite() {
            return Err(Error::invalid("scan phase is not finite"));
        }
        n += 1;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if n < MIN_SCAN_SAMPLES {
        return Err(Error::invalid(format!("scan needs at least {MIN_SCAN_SAMPLES} samples, got {n}")));
    }
    if hi - lo < TAU - 1e-9 {
        return Err(Error::invalid(format!("scan spans {:.4} rad, needs a full period", hi - lo)));
    }
    Ok(())
}

/// Split ratios `r(j|k)` normalized over outputs for each input, and magnitudes `√r`.
pub fn split_ratios(table: &IntensityTable) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = table.dim();
    let mut r = table.values.clone();
    for k in 0..n {
        let total: f64 = r.column(k).sum();
        if !(total > 0.0) {
            return Err(Error::invalid(format!("input {k} has no detected intensity")));
        }
        r.column_mut(k).iter_mut().for_each(|v| *v /= total);
    }
    let u = r.map(f64::sqrt);
    Ok((r, u))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    /// Relative phase `φ_kj − φ_k0` in `[0, 2π)`.
    pub delta: f64,
    pub offset: f64,
    pub amplitude: f64,
    /// Root-mean-square residual of the fitted fringe.
    pub residual: f64,
    /// Fitted amplitude over the `u_k0·u_kj` expected from the split ratios.
    pub contrast_ratio: f64,
}

/// Least-squares fit of `A + B·cos(ϕ + δ)` to a phase scan.
pub fn fit_phase(scan: &PhaseScan, u_k0: f64, u_kj: f64) -> Result<PhaseFit> {
    scan.validate()?;
    if !(u_k0 > 0.0 && u_k0 <= 1.0 && u_kj > 0.0 && u_kj <= 1.0) {
        return Err(Error::invalid(format!("magnitudes must lie in (0, 1], got {u_k0} and {u_kj}")));
    }
    let (c, residual) = cosine_fit(scan.samples.iter().map(|s| (s.phase, s.probability)))?;
    let amplitude = c[1].hypot(c[2]);
    if amplitude < MIN_FRINGE_AMPLITUDE {
        return Err(Error::DegenerateFit(amplitude));
    }
    Ok(PhaseFit {
        delta: wrap_2pi((-c[2]).atan2(c[1])),
        offset: c[0],
        amplitude,
        residual,
        contrast_ratio: amplitude / (u_k0 * u_kj),
    })
}

/// Solves `y ≈ c0 + c1 cos ϕ + c2 sin ϕ`; returns the coefficients and RMS residual.
pub(crate) fn cosine_fit(samples: impl Iterator<Item = (f64, f64)>) -> Result<([f64; 3], f64)> {
    let samples: Vec<(f64, f64)> = samples.collect();
    let n = samples.len();
    let a = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => 1.0,
        1 => samples[i].0.cos(),
        _ => samples[i].0.sin(),
    });
    let y = nalgebra::DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::invalid(format!("phase fit failed: {e}")))?;
    let resid = &a * &sol - &y;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    Ok(([sol[0], sol[1], sol[2]], rms))
}

/// Moves raw relative phases `δ_kj = φ_kj − φ_k0` to the real-border gauge.
///
/// Row 0 is made real by subtracting `δ_0j` from every row; column 0 is real
/// by construction. Entry `(k, 0)` and row 0 of the result are `None`.
pub fn gauge_relative_phases(delta: &DMatrix<Option<f64>>) -> Result<DMatrix<Option<f64>>> {
    let n = delta.nrows();
    let mut out = DMatrix::from_element(n, n, None);
    for j in 1..n {
        let d0 = delta[(0, j)].ok_or(Error::MissingPhase { row: 0, col: j })?;
        for k in 1..n {
            let d = delta[(k, j)].ok_or(Error::MissingPhase { row: k, col: j })?;
            out[(k, j)] = Some(wrap_2pi(d - d0));
        }
    }
    Ok(out)
}

/// `Ũ_jk = u_jk·e^{iφ_jk}` with a real first row and column.
///
/// Border entries of `phases` must be absent or zero; every other entry must
/// be present, so exactly `(N−1)²` phases are placed.
pub fn assemble_experimental_matrix(u: &DMatrix<f64>, phases: &DMatrix<Option<f64>>) -> Result<ComplexMatrix> {
    let n = u.nrows();
    if !u.is_square() || phases.shape() != u.shape() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: phases.nrows(),
        });
    }
    let mut m = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for j in 0..n {
        for k in 0..n {
            let border = j == 0 || k == 0;
            let phase = match (border, phases[(j, k)]) {
                (true, None) => 0.0,
                (true, Some(p)) if circular_distance(p, 0.0) <= 1e-12 => 0.0,
                (true, Some(p)) => return Err(Error::GaugeViolation { row: j, col: k, phase: p }),
                (false, Some(p)) if p.is_finite() => p,
                (false, _) => return Err(Error::MissingPhase { row: j, col: k }),
            };
            m[(j, k)] = C64::from_polar(u[(j, k)], phase);
        }
    }
    ComplexMatrix::new(m)
}

/// Noiseless intensities and phase scans that a device `w` would produce.
pub fn synthesize_measurements(w: &ComplexMatrix, points: usize) -> Result<(IntensityTable, Vec<PhaseScan>)> {
    let n = w.nrows();
    let table = IntensityTable::without_errors(DMatrix::from_fn(n, n, |j, k| w.get(j, k).norm_sqr()))?;
    let mut scans = Vec::with_capacity(n * (n - 1));
    for j in 1..n {
        for k in 0..n {
            let samples = (0..points)
                .map(|i| {
                    let phase = TAU * i as f64 / (points - 1) as f64;
                    let amp = (w.get(k, 0) + C64::from_polar(1.0, phase) * w.get(k, j)) / std::f64::consts::SQRT_2;
                    ScanSample {
                        phase,
                        probability: amp.norm_sqr().clamp(0.0, 1.0),
                        error: 0.0,
                    }
                })
                .collect();
            scans.push(PhaseScan { pair: j, output: k, samples });
        }
    }
    Ok((table, scans))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelComparison {
    /// Detector relabeling applied to the estimate before comparing, as a row order.
    pub output_order: Vec<usize>,
    pub fidelity: f64,
    pub fidelity_3sigma: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TomographyResult {
    pub experimental: ComplexMatrix,
    pub unitary: UnitaryMatrix,
    pub fidelity_exp_unitary: f64,
    pub fidelity_exp_unitary_3sigma: Option<f64>,
    /// Real-border phases `φ_jk` of the experimental matrix.
    pub phases: DMatrix<f64>,
    pub model: Option<ModelComparison>,
}

impl TomographyResult {
    pub fn from_experimental(experimental: ComplexMatrix, opts: &ProjectionOptions) -> Result<Self> {
        let proj = project_to_unitary(&experimental, opts)?;
        let n = experimental.nrows();
        let phases = DMatrix::from_fn(n, n, |j, k| wrap_2pi(experimental.get(j, k).arg()));
        Ok(Self {
            fidelity_exp_unitary: proj.fidelity,
            experimental,
            unitary: proj.unitary,
            fidelity_exp_unitary_3sigma: None,
            phases,
            model: None,
        })
    }

    /// Compares the unitary estimate with a model matrix up to detector relabeling.
    pub fn compare_with(&mut self, model: &ComplexMatrix) -> Result<&ModelComparison> {
        let (output_order, fidelity) = best_output_relabeling(self.unitary.matrix(), model)?;
        Ok(self.model.insert(ModelComparison {
            output_order,
            fidelity,
            fidelity_3sigma: None,
        }))
    }
}

/// Full pipeline: split ratios, phase fits, gauge fixing, assembly and projection.
pub fn reconstruct(table: &IntensityTable, scans: &[PhaseScan], opts: &ProjectionOptions) -> Result<TomographyResult> {
    let n = table.dim();
    let (_, u) = split_ratios(table)?;
    let mut delta = DMatrix::from_element(n, n, None);
    for scan in scans {
        if scan.pair == 0 || scan.pair >= n || scan.output >= n {
            return Err(Error::invalid(format!(
                "scan (pair {}, output {}) is outside the {n}-port device",
                scan.pair, scan.output
            )));
        }
        let fit = fit_phase(scan, u[(scan.output, 0)], u[(scan.output, scan.pair)])?;
        delta[(scan.output, scan.pair)] = Some(fit.delta);
    }
    let phases = gauge_relative_phases(&delta)?;
    let experimental = assemble_experimental_matrix(&u, &phases)?;
    TomographyResult::from_experimental(experimental, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{matrix_fidelity, symmetric_bs_4};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn scan_from(f: impl Fn(f64) -> f64, points: usize, shift: f64) -> PhaseScan {
        let samples = (0..points)
            .map(|i| {
                let phase = TAU * i as f64 / (points - 1) as f64 + shift;
                ScanSample {
                    phase,
                    probability: f(phase),
                    error: 0.0,
                }
            })
            .collect();
        PhaseScan { pair: 1, output: 1, samples }
    }

    #[test]
    fn uniform_split_ratios() {
        let t = IntensityTable::without_errors(DMatrix::from_element(4, 4, 1.0)).unwrap();
        let (r, u) = split_ratios(&t).unwrap();
        assert!(r.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(u.iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn single_port_column() {
        let mut v = DMatrix::from_element(4, 4, 1.0);
        v.set_column(0, &nalgebra::DVector::from_vec(vec![4.0, 0.0, 0.0, 0.0]));
        let (r, _) = split_ratios(&IntensityTable::without_errors(v).unwrap()).unwrap();
        assert_eq!(r.column(0).as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_column_rejected() {
        let mut v = DMatrix::from_element(3, 3, 1.0);
        v.set_column(2, &nalgebra::DVector::zeros(3));
        assert!(split_ratios(&IntensityTable::without_errors(v).unwrap()).is_err());
    }

    #[test]
    fn fit_recovers_known_offset() {
        let s = scan_from(|p| 0.5 * (0.25 + 0.25 + 2.0 * 0.25 * (p + PI / 3.0).cos()), 16, 0.0);
        let fit = fit_phase(&s, 0.5, 0.5).unwrap();
        assert!((fit.delta - PI / 3.0).abs() < 1e-9);
        assert!(fit.residual < 1e-12);
        assert!((fit.contrast_ratio - 1.0).abs() < 1e-9);
        let s = scan_from(|p| 0.25 + 0.25 * p.cos(), 16, 0.0);
        assert!(circular_distance(fit_phase(&s, 0.5, 0.5).unwrap().delta, 0.0) < 1e-9);
    }

    #[test]
    fn flat_scan_is_degenerate() {
        let s = scan_from(|_| 0.3, 16, 0.0);
        assert!(matches!(fit_phase(&s, 0.5, 0.5), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn short_scan_rejected() {
        let s = scan_from(|p| 0.25 + 0.25 * p.cos(), 6, 0.0);
        assert!(fit_phase(&s, 0.5, 0.5).is_err());
    }

    #[test]
    fn assemble_zero_phases_gives_bs() {
        let u = DMatrix::from_element(4, 4, 0.5);
        let mut ph = DMatrix::from_element(4, 4, None);
        for j in 1..4 {
            for k in 1..4 {
                ph[(j, k)] = Some(if (crate::linops::SIGNS_4[j][k]) < 0.0 { PI } else { 0.0 });
            }
        }
        let m = assemble_experimental_matrix(&u, &ph).unwrap();
        assert!(m.max_abs_diff(symmetric_bs_4(0.0).matrix()) < 1e-15);
    }

    #[test]
    fn assemble_rejects_bad_gauge_and_gaps() {
        let u = DMatrix::from_element(3, 3, 0.5);
        let mut ph = DMatrix::from_element(3, 3, Some(0.0));
        ph[(0, 2)] = Some(0.4);
        assert!(matches!(
            assemble_experimental_matrix(&u, &ph),
            Err(Error::GaugeViolation { row: 0, col: 2, .. })
        ));
        ph[(0, 2)] = None;
        ph[(1, 1)] = None;
        assert!(matches!(
            assemble_experimental_matrix(&u, &ph),
            Err(Error::MissingPhase { row: 1, col: 1 })
        ));
    }

    #[test]
    fn pipeline_on_bs_data() {
        let v = symmetric_bs_4(0.0);
        let (table, scans) = synthesize_measurements(v.matrix(), 16).unwrap();
        let r = reconstruct(&table, &scans, &ProjectionOptions::default()).unwrap();
        assert!(r.experimental.max_abs_diff(v.matrix()) < 1e-9);
        assert!(matrix_fidelity(r.unitary.matrix(), v.matrix()).unwrap() > 1.0 - 1e-8);
    }

    proptest! {
        #[test]
        fn fit_is_shift_equivariant(delta in 0.0f64..TAU, c in -5.0f64..5.0) {
            let f = |p: f64| 0.25 + 0.2 * (p + delta).cos();
            let base = fit_phase(&scan_from(f, 12, 0.0), 0.5, 0.5).unwrap().delta;
            // relabel every sample phase ϕ → ϕ + c without touching the data
            let mut s = scan_from(f, 12, 0.0);
            s.samples.iter_mut().for_each(|x| x.phase += c);
            let shifted = fit_phase(&s, 0.5, 0.5).unwrap().delta;
            prop_assert!(circular_distance(shifted, base - c) < 1e-9);
        }
    }
}
