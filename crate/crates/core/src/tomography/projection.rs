//! Nearest real-border unitary to an experimental matrix.
//!
//! The search runs over an arbitrary complex `Z`, mapped to a unitary by the
//! polar factor `P = Z(Z†Z)^{-1/2}` and then to a real-border unitary by
//! absorbing row and column phases. The cost is `1 − F(Ũ, ·)`; its gradient
//! is back-propagated analytically through both maps and fed to L-BFGS.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{matrix_fidelity, ComplexMatrix, UnitaryMatrix, C64, SINGULAR_TOL};

/// Where the real-border restriction enters the optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// Minimize `1 − F(Ũ, gauge(polar(Z)))`: the optimum over real-border unitaries.
    Constrained,
    /// Minimize `1 − F(Ũ, polar(Z))`, then move the optimum to the real-border gauge.
    PolarThenGauge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionOptions {
    pub mode: ProjectionMode,
    /// Random starting points tried after the `Z₀ = Ũ` start.
    pub restarts: usize,
    pub max_iterations: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            mode: ProjectionMode::Constrained,
            restarts: 20,
            max_iterations: 10_000,
            grad_tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub unitary: UnitaryMatrix,
    pub fidelity: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Row and column phases removed so the first row and column become real and non-negative.
pub fn real_border_gauge(p: &DMatrix<C64>) -> DMatrix<C64> {
    let theta = gauge_angles(p);
    DMatrix::from_fn(p.nrows(), p.ncols(), |j, k| p[(j, k)] * C64::from_polar(1.0, -theta[(j, k)]))
}

fn gauge_angles(p: &DMatrix<C64>) -> DMatrix<f64> {
    let a00 = p[(0, 0)].arg();
    DMatrix::from_fn(p.nrows(), p.ncols(), |j, k| p[(j, 0)].arg() - a00 + p[(0, k)].arg())
}

struct Polar {
    p: DMatrix<C64>,
    v: DMatrix<C64>,
    sigma: DVector<f64>,
}

fn polar(z: &DMatrix<C64>) -> Result<Polar> {
    let svd = z.clone().svd(true, true);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > SINGULAR_TOL) {
        return Err(Error::Singular(smin));
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    Ok(Polar {
        p: &u * &vt,
        v: vt.adjoint(),
        sigma: svd.singular_values,
    })
}

/// Cost and gradient with respect to `Z`, using `df = Re Tr(∇† dZ)`.
pub(crate) fn cost_and_gradient(
    target: &DMatrix<C64>,
    z: &DMatrix<C64>,
    mode: ProjectionMode,
) -> Result<(f64, DMatrix<C64>)> {
    let n = z.nrows();
    let nn = (n * n) as f64;
    let pol = polar(z)?;
    let p = &pol.p;

    let (f, grad_p) = match mode {
        ProjectionMode::PolarThenGauge => {
            let t: C64 = target.iter().zip(p.iter()).map(|(u, g)| u.conj() * g).sum();
            let f = 1.0 - t.norm_sqr() / nn;
            (f, target.map(|u| u * t * (-2.0 / nn)))
        }
        ProjectionMode::Constrained => {
            let theta = gauge_angles(p);
            let g = DMatrix::from_fn(n, n, |j, k| p[(j, k)] * C64::from_polar(1.0, -theta[(j, k)]));
            let t: C64 = target.iter().zip(g.iter()).map(|(u, g)| u.conj() * g).sum();
            let f = 1.0 - t.norm_sqr() / nn;
            let grad_g = target.map(|u| u * t * (-2.0 / nn));

            let mut grad_p = DMatrix::from_fn(n, n, |j, k| grad_g[(j, k)] * C64::from_polar(1.0, theta[(j, k)]));
            // phase sensitivity: dθ_jk = dα_j0 − dα_00 + dα_0k with α = arg P
            let w = DMatrix::from_fn(n, n, |j, k| (grad_g[(j, k)].conj() * g[(j, k)]).im);
            let mut c = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                for k in 0..n {
                    c[(j, 0)] += w[(j, k)];
                    c[(0, k)] += w[(j, k)];
                    c[(0, 0)] -= w[(j, k)];
                }
            }
            for j in 0..n {
                for k in 0..n {
                    if c[(j, k)] != 0.0 {
                        let pjk = p[(j, k)];
                        let m2 = pjk.norm_sqr().max(1e-300);
                        grad_p[(j, k)] += C64::new(0.0, c[(j, k)]) * pjk / m2;
                    }
                }
            }
            (f, grad_p)
        }
    };

    // back through the polar factor
    let a = p.adjoint() * &grad_p;
    let ap = pol.v.adjoint() * a * &pol.v;
    let la = DMatrix::from_fn(n, n, |i, j| ap[(i, j)] / (pol.sigma[i] + pol.sigma[j]));
    let b = &pol.v * la * pol.v.adjoint();
    let grad_z = p * (&b - b.adjoint());
    Ok((f, grad_z))
}

fn to_real(z: &DMatrix<C64>) -> Vec<f64> {
    z.iter().map(|c| c.re).chain(z.iter().map(|c| c.im)).collect()
}

fn from_real(x: &[f64], n: usize) -> DMatrix<C64> {
    let m = n * n;
    DMatrix::from_iterator(n, n, (0..m).map(|i| C64::new(x[i], x[m + i])))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Limited-memory BFGS with a backtracking Armijo line search.
///
/// Stops when the gradient norm drops to `grad_tol`, at the iteration cap, or
/// when the cost has stopped changing at double precision. A stalled run
/// counts as converged only if its gradient norm is below [`STALL_GRAD_TOL`].
pub(crate) fn lbfgs(
    mut fg: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    max_iterations: usize,
    grad_tol: f64,
) -> Result<Minimum> {
    const MEMORY: usize = 10;
    let mut x = x0;
    let (mut f, mut g) = fg(&x)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0;
    let mut stalled = false;
    let mut flat_steps = 0;

    while iterations < max_iterations {
        let gn = norm(&g);
        if gn <= grad_tol {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &q);
            q.iter_mut().zip(&y_hist[i]).for_each(|(q, y)| *q -= alpha[i] * y);
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / gn.max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            q.iter_mut().zip(&s_hist[i]).for_each(|(q, s)| *q += (alpha[i] - beta) * s);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            d = g.iter().map(|v| -v / gn.max(1.0)).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + step * d).collect();
            if let Ok((fnew, gnew)) = fg(&xn) {
                if fnew <= f + 1e-4 * step * slope {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((xn, fnew, gnew)) = accepted else {
            stalled = true;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-300 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        if f - fnew <= 1e-15 * f.abs().max(1.0) {
            flat_steps += 1;
        } else {
            flat_steps = 0;
        }
        x = xn;
        f = fnew;
        g = gnew;
        if flat_steps >= 10 {
            stalled = true;
            break;
        }
    }
    let grad_norm = norm(&g);
    Ok(Minimum {
        x,
        f,
        grad_norm,
        iterations,
        converged: grad_norm <= grad_tol || (stalled && grad_norm <= STALL_GRAD_TOL),
    })
}

/// Gradient norm accepted when the cost can no longer be lowered in floating point.
pub const STALL_GRAD_TOL: f64 = 1e-6;

/// Weight of the `‖Z†Z − I‖²` term that keeps `Z` well conditioned.
///
/// The cost depends on `Z` only through its polar factor, and the penalty
/// vanishes at `Z = P`, so the optimal unitary is unchanged.
const CONDITIONING_WEIGHT: f64 = 0.1;

fn minimize_from(target: &DMatrix<C64>, z0: &DMatrix<C64>, opts: &ProjectionOptions) -> Result<Minimum> {
    let n = target.nrows();
    let eye = DMatrix::<C64>::identity(n, n);
    lbfgs(
        |x| {
            let z = from_real(x, n);
            let (f, g) = cost_and_gradient(target, &z, opts.mode)?;
            let dev = z.adjoint() * &z - &eye;
            let penalty = CONDITIONING_WEIGHT * dev.norm_squared();
            let g = g + &z * &dev * C64::new(4.0 * CONDITIONING_WEIGHT, 0.0);
            Ok((f + penalty, to_real(&g)))
        },
        to_real(z0),
        opts.max_iterations,
        opts.grad_tol,
    )
}

/// Real-border unitary maximizing the fidelity with `experimental`.
///
/// `experimental` is expected in the real-border gauge, as produced by
/// assembly. A target whose border carries phases can pull the optimum onto a
/// vanishing border entry, where the gauge map is not differentiable.
pub fn project_to_unitary(experimental: &ComplexMatrix, opts: &ProjectionOptions) -> Result<Projection> {
    if !experimental.is_square() {
        return Err(Error::invalid("projection needs a square matrix"));
    }
    let target = experimental.as_matrix();
    let n = target.nrows();
    polar(target)?;

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut best: Option<Minimum> = None;
    let mut last_err = None;
    for attempt in 0..=opts.restarts {
        let z0 = if attempt == 0 {
            target.clone()
        } else {
            DMatrix::from_fn(n, n, |_, _| {
                C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            })
        };
        match minimize_from(target, &z0, opts) {
            Ok(m) => {
                log::debug!(
                    "projection start {attempt}: f = {:e}, |g| = {:e}, {} iterations",
                    m.f,
                    m.grad_norm,
                    m.iterations
                );
                let better = match &best {
                    None => true,
                    Some(b) => (m.converged, -m.f) > (b.converged, -b.f),
                };
                if better {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start is always tried"),
    };
    if !best.converged {
        return Err(Error::NoConvergence {
            iterations: best.iterations,
            grad_norm: best.grad_norm,
        });
    }

    let pol = polar(&from_real(&best.x, n))?;
    let gauged = real_border_gauge(&pol.p);
    let unitary = UnitaryMatrix::new(ComplexMatrix::new(gauged)?)?;
    let fidelity = matrix_fidelity(experimental, unitary.matrix())?;
    Ok(Projection {
        unitary,
        fidelity,
        iterations: best.iterations,
        grad_norm: best.grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::symmetric_bs_4;
    use proptest::prelude::*;

    fn matrix_from(entries: &[f64], n: usize) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |j, k| C64::new(entries[2 * (j * n + k)], entries[2 * (j * n + k) + 1]))
    }

    fn cost_only(target: &DMatrix<C64>, z: &DMatrix<C64>, mode: ProjectionMode) -> f64 {
        cost_and_gradient(target, z, mode).unwrap().0
    }

    fn check_gradient(target: &DMatrix<C64>, z: &DMatrix<C64>, mode: ProjectionMode) {
        let (_, g) = cost_and_gradient(target, z, mode).unwrap();
        let h = 1e-6;
        let n = z.nrows();
        let mut worst = 0.0f64;
        let gnorm = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for j in 0..n {
            for k in 0..n {
                for (dir, analytic) in [(C64::new(1.0, 0.0), g[(j, k)].re), (C64::new(0.0, 1.0), g[(j, k)].im)] {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[(j, k)] += dir * h;
                    zm[(j, k)] -= dir * h;
                    let fd = (cost_only(target, &zp, mode) - cost_only(target, &zm, mode)) / (2.0 * h);
                    worst = worst.max((fd - analytic).abs());
                }
            }
        }
        assert!(worst <= 1e-5 * gnorm.max(1e-3), "gradient mismatch {worst:e} (|g| = {gnorm:e})");
    }

    #[test]
    fn unitary_input_is_a_fixed_point() {
        let v = symmetric_bs_4(0.0);
        let p = project_to_unitary(v.matrix(), &ProjectionOptions::default()).unwrap();
        assert!((p.fidelity - 1.0).abs() < 1e-12);
        assert!(p.unitary.matrix().max_abs_diff(v.matrix()) < 1e-8);
    }

    #[test]
    fn singular_input_rejected() {
        let z = ComplexMatrix::from_fn(3, 3, |_, _| C64::new(1.0, 0.0)).unwrap();
        assert!(matches!(
            project_to_unitary(&z, &ProjectionOptions::default()),
            Err(Error::Singular(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_matches_finite_differences(t in prop::collection::vec(-1.0f64..1.0, 32),
                                               z in prop::collection::vec(-1.0f64..1.0, 32)) {
            let target = matrix_from(&t, 4);
            let z = matrix_from(&z, 4);
            let smin = z.clone().singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(smin > 0.05);
            let pol = polar(&z).unwrap();
            prop_assume!(pol.p.iter().take(4).chain(pol.p.row(0).iter()).all(|c| c.norm() > 0.05));
            check_gradient(&target, &z, ProjectionMode::Constrained);
            check_gradient(&target, &z, ProjectionMode::PolarThenGauge);
        }

        #[test]
        fn output_has_real_border(w in prop::collection::vec(-1.0f64..1.0, 18),
                                  noise in prop::collection::vec(-0.05f64..0.05, 18)) {
            // experimental matrices are noisy unitaries in the real-border gauge
            let w = matrix_from(&w, 3);
            prop_assume!(w.clone().singular_values().iter().all(|s| *s > 0.05));
            let u = real_border_gauge(&polar(&w).unwrap().p);
            prop_assume!(u.row(0).iter().chain(u.column(0).iter()).all(|c| c.norm() > 0.1));
            let target = real_border_gauge(&(u + matrix_from(&noise, 3)));
            let target = ComplexMatrix::new(target).unwrap();
            let opts = ProjectionOptions { restarts: 2, ..Default::default() };
            let p = project_to_unitary(&target, &opts).unwrap();
            prop_assert!(p.unitary.is_real_border(1e-12));
        }
    }
}
