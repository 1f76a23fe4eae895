//! The guessing-probability SDP.
//!
//! ```text
//! P_g = max Σ_a tr(N_aa ρ_x*)
//!   s.t. Σ_e tr(N_ae ρ_x) = p(a|x)          (exact)
//!        |Σ_e tr(N_ae ρ_x) − ξ(a|x)| ≤ t_x   (finite statistics)
//!        Σ_a N_ae = q_e I,  Σ_e q_e = 1,  N_ae ⪰ 0
//! ```
//!
//! Each `N_ae` is one PSD block and each `q_e` a scalar non-negative block;
//! the gauge rows of guess `e` form one constraint group so the solver can
//! factor the Schur complement per guess.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::{FrequencyTable, PreparationEnsemble};
use crate::error::{Error, Result};
use crate::linops::C64;
use crate::sdp::{embed_hermitian, solve_sdp, BlockKind, Coeff, SdpOptions, SdpProblem, SdpStatus};

/// Slack allowed when checking `P_g ≥ max_a p(a|x*)` on a returned solution.
const TRIVIAL_BOUND_TOL: f64 = 1e-6;

/// Constraint residuals of a returned solution.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Residuals {
    /// Largest violation of an observed-statistics row.
    pub statistics: f64,
    /// Largest entry of `Σ_a N_ae − q_e I` over `e`.
    pub completeness: f64,
    /// `|Σ_e q_e − 1|`.
    pub normalization: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SdpSolution {
    pub p_guess: f64,
    /// Upper bound on `P_g` from the dual objective.
    pub dual_bound: f64,
    pub gap: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    /// Eve's guess distribution `q_e`.
    pub q: Vec<f64>,
    /// `N_ae` indexed `[a][e]`.
    #[serde(skip)]
    pub povm: Vec<Vec<DMatrix<C64>>>,
}

impl SdpSolution {
    /// The larger of the primal value and the dual bound: the certified `P_g`.
    pub fn certified_p_guess(&self) -> f64 {
        self.p_guess.max(self.dual_bound).min(1.0)
    }

    pub fn min_entropy(&self) -> Result<f64> {
        super::min_entropy(self.certified_p_guess())
    }
}

/// Observed statistics and the rows of them that constrain Eve.
#[derive(Clone, Debug)]
pub struct GuessingProblem<'a> {
    ensemble: &'a PreparationEnsemble,
    target: usize,
    data: DMatrix<f64>,
    halfwidths: Option<Vec<f64>>,
    active: DMatrix<bool>,
    pub options: SdpOptions,
}

impl<'a> GuessingProblem<'a> {
    /// Equality constraints with model probabilities `p(a|x)` (outcome-by-input).
    pub fn exact(ensemble: &'a PreparationEnsemble, probabilities: DMatrix<f64>, target: usize) -> Result<Self> {
        Self::build(ensemble, probabilities, None, target)
    }

    /// Interval constraints `|p − ξ| ≤ t_x` with Hoeffding half-widths at confidence `ε`.
    pub fn finite(ensemble: &'a PreparationEnsemble, table: &FrequencyTable, epsilon: f64, target: usize) -> Result<Self> {
        let t = table.halfwidths(epsilon)?;
        Self::build(ensemble, table.frequencies().clone(), Some(t), target)
    }

    /// Interval constraints with explicit per-input half-widths.
    pub fn with_halfwidths(
        ensemble: &'a PreparationEnsemble,
        frequencies: DMatrix<f64>,
        halfwidths: Vec<f64>,
        target: usize,
    ) -> Result<Self> {
        if halfwidths.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("half-widths must be non-negative"));
        }
        Self::build(ensemble, frequencies, Some(halfwidths), target)
    }

    fn build(
        ensemble: &'a PreparationEnsemble,
        data: DMatrix<f64>,
        halfwidths: Option<Vec<f64>>,
        target: usize,
    ) -> Result<Self> {
        let inputs = ensemble.len();
        if data.ncols() != inputs {
            return Err(Error::DimensionMismatch {
                expected: inputs,
                got: data.ncols(),
            });
        }
        if data.nrows() < 2 {
            return Err(Error::invalid("need at least two outcomes"));
        }
        if target >= inputs {
            return Err(Error::invalid(format!("target input {target} out of range 0..{inputs}")));
        }
        if let Some(t) = &halfwidths {
            if t.len() != inputs {
                return Err(Error::DimensionMismatch {
                    expected: inputs,
                    got: t.len(),
                });
            }
        }
        for (x, col) in data.column_iter().enumerate() {
            if col.iter().any(|v| !(-1e-12..=1.0 + 1e-12).contains(v)) || (col.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("statistics for input {x} are not a probability distribution")));
            }
        }
        let active = DMatrix::from_element(data.nrows(), inputs, true);
        Ok(Self {
            ensemble,
            target,
            data,
            halfwidths,
            active,
            options: SdpOptions::default(),
        })
    }

    /// Keeps only the rows `(a, x)` for which `keep` is true.
    pub fn restrict(mut self, keep: impl Fn(usize, usize) -> bool) -> Self {
        for x in 0..self.active.ncols() {
            for a in 0..self.active.nrows() {
                self.active[(a, x)] = keep(a, x);
            }
        }
        self
    }

    pub fn outcomes(&self) -> usize {
        self.data.nrows()
    }

    /// `max_a p(a|x*)` (less the half-width for interval data): no admissible
    /// strategy guesses worse than always betting on the likeliest outcome.
    pub fn trivial_bound(&self) -> f64 {
        let best = self.data.column(self.target).max();
        let t = self.halfwidths.as_ref().map_or(0.0, |t| t[self.target]);
        let rows_active = self.active.column(self.target).iter().any(|&b| b);
        if rows_active {
            (best - t).max(0.0)
        } else {
            0.0
        }
    }

    pub fn solve(&self) -> Result<SdpSolution> {
        let m = self.outcomes();
        let real = self.ensemble.is_real();
        let d = self.ensemble.dim();
        let n = if real { d } else { 2 * d };
        // tr(A B) for Hermitian A, B equals ½⟨emb A, emb B⟩
        let weight = if real { 1.0 } else { 0.5 };
        let rho: Vec<Arc<DMatrix<f64>>> = self
            .ensemble
            .states()
            .iter()
            .map(|r| {
                let e = if real { r.map(|z| z.re) } else { embed_hermitian(r) };
                Arc::new(e * weight)
            })
            .collect();

        let mut sdp = SdpProblem::default();
        let nb = |a: usize, e: usize| a * m + e;
        for _ in 0..m * m {
            sdp.add_block(BlockKind::Psd(n));
        }
        let q_block: Vec<usize> = (0..m).map(|_| sdp.add_block(BlockKind::Nonneg(1))).collect();

        let neg_target = Arc::new(-(*rho[self.target]).clone());
        sdp.objective = (0..m).map(|a| (nb(a, a), Coeff::Dense(neg_target.clone()))).collect();

        for e in 0..m {
            for p in 0..n {
                for q in p..n {
                    let v = if p == q { 1.0 } else { 0.5 };
                    let mut terms: Vec<(usize, Coeff)> = (0..m).map(|a| (nb(a, e), Coeff::entry(p, q, v))).collect();
                    if p == q {
                        terms.push((q_block[e], Coeff::entry(0, 0, -1.0)));
                    }
                    sdp.add_constraint(terms, 0.0, Some(e));
                }
            }
        }
        sdp.add_constraint(q_block.iter().map(|&b| (b, Coeff::entry(0, 0, 1.0))).collect(), 1.0, None);

        let row_terms = |a: usize, x: usize| -> Vec<(usize, Coeff)> {
            (0..m).map(|e| (nb(a, e), Coeff::Dense(rho[x].clone()))).collect()
        };
        match &self.halfwidths {
            None => {
                for x in 0..self.data.ncols() {
                    let mut rows: Vec<usize> = (0..m).filter(|&a| self.active[(a, x)]).collect();
                    // with every outcome present the rows sum to the normalization row
                    if rows.len() == m {
                        rows.pop();
                    }
                    for a in rows {
                        sdp.add_constraint(row_terms(a, x), self.data[(a, x)], None);
                    }
                }
            }
            Some(t) => {
                let mut bounds = Vec::new();
                for x in 0..self.data.ncols() {
                    for a in (0..m).filter(|&a| self.active[(a, x)]) {
                        let (lo, hi) = (self.data[(a, x)] - t[x], self.data[(a, x)] + t[x]);
                        if lo > 0.0 {
                            bounds.push((a, x, lo, -1.0));
                        }
                        if hi < 1.0 {
                            bounds.push((a, x, hi, 1.0));
                        }
                    }
                }
                if !bounds.is_empty() {
                    let slack = sdp.add_block(BlockKind::Nonneg(bounds.len()));
                    for (i, &(a, x, rhs, sign)) in bounds.iter().enumerate() {
                        let mut terms = row_terms(a, x);
                        terms.push((slack, Coeff::entry(i, i, sign)));
                        sdp.add_constraint(terms, rhs, None);
                    }
                }
            }
        }

        let res = solve_sdp(&sdp, &self.options)?.into_optimal()?;
        let povm: Vec<Vec<DMatrix<C64>>> = (0..m)
            .map(|a| (0..m).map(|e| unembed(&res.x[nb(a, e)], d, real)).collect())
            .collect();
        let q: Vec<f64> = q_block.iter().map(|&b| res.x[b][(0, 0)]).collect();
        let p_guess = -res.primal_objective;
        let residuals = self.residuals(&povm, &q);
        let sol = SdpSolution {
            p_guess,
            dual_bound: -res.dual_objective,
            gap: res.gap,
            status: res.status,
            iterations: res.iterations,
            residuals,
            q,
            povm,
        };
        let floor = self.trivial_bound();
        if sol.dual_bound < floor - TRIVIAL_BOUND_TOL {
            log::warn!("guessing probability bound {:.9} below trivial bound {:.9}", sol.dual_bound, floor);
        }
        Ok(sol)
    }

    fn residuals(&self, povm: &[Vec<DMatrix<C64>>], q: &[f64]) -> Residuals {
        let m = povm.len();
        let d = self.ensemble.dim();
        let mut r = Residuals {
            normalization: (q.iter().sum::<f64>() - 1.0).abs(),
            ..Default::default()
        };
        for e in 0..m {
            let mut sum = DMatrix::<C64>::identity(d, d) * C64::new(-q[e], 0.0);
            for row in povm {
                sum += &row[e];
            }
            r.completeness = r.completeness.max(sum.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        for x in 0..self.data.ncols() {
            let rho = self.ensemble.state(x);
            for a in (0..m).filter(|&a| self.active[(a, x)]) {
                let p: f64 = povm[a].iter().map(|n| (n * rho).trace().re).sum();
                let t = self.halfwidths.as_ref().map_or(0.0, |t| t[x]);
                let v = ((p - self.data[(a, x)]).abs() - t).max(0.0);
                r.statistics = r.statistics.max(v);
            }
        }
        r
    }
}

fn unembed(y: &DMatrix<f64>, d: usize, real: bool) -> DMatrix<C64> {
    if real {
        let s = (y + y.transpose()) * 0.5;
        return s.map(|v| C64::new(v, 0.0));
    }
    DMatrix::from_fn(d, d, |i, j| {
        let re = 0.25 * (y[(i, j)] + y[(j, i)] + y[(i + d, j + d)] + y[(j + d, i + d)]);
        let im = 0.25 * (y[(i + d, j)] - y[(j + d, i)] - y[(i, j + d)] + y[(j, i + d)]);
        C64::new(re, im)
    })
}

/// Outcome probabilities `tr(M_a ρ_x)` of a POVM on an ensemble, outcome-by-input.
pub fn born_probabilities(povm: &[DMatrix<C64>], ensemble: &PreparationEnsemble) -> DMatrix<f64> {
    DMatrix::from_fn(povm.len(), ensemble.len(), |a, x| (&povm[a] * ensemble.state(x)).trace().re)
}
