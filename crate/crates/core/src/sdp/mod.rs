//! Primal-dual interior-point solver for small semidefinite programs.
//!
//! Standard form over a product of real symmetric PSD blocks and
//! non-negative orthants:
//!
//! ```text
//! minimize  Σ_b ⟨C_b, X_b⟩   s.t.  Σ_b ⟨A_ib, X_b⟩ = b_i,  X_b ⪰ 0
//! maximize  bᵀy               s.t.  C − Σ_i y_i A_i = S ⪰ 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector, started
//! from an infeasible interior point. Constraints may carry a group label:
//! grouped constraints of different groups must touch disjoint blocks, which
//! makes the Schur matrix block-diagonal apart from the ungrouped rows, and
//! it is factored block by block. Complex Hermitian problems are handled by
//! the caller through [`embed_hermitian`].

mod chol;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::C64;
use chol::Cholesky;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// Symmetric positive semidefinite matrix of the given size.
    Psd(usize),
    /// Vector of the given length with non-negative entries.
    Nonneg(usize),
}

impl BlockKind {
    fn size(self) -> usize {
        match self {
            BlockKind::Psd(n) | BlockKind::Nonneg(n) => n,
        }
    }

    fn zeros(self) -> DMatrix<f64> {
        match self {
            BlockKind::Psd(n) => DMatrix::zeros(n, n),
            BlockKind::Nonneg(n) => DMatrix::zeros(n, 1),
        }
    }

    fn identity(self, scale: f64) -> DMatrix<f64> {
        match self {
            BlockKind::Psd(n) => DMatrix::identity(n, n) * scale,
            BlockKind::Nonneg(n) => DMatrix::from_element(n, 1, scale),
        }
    }
}

/// Coefficient matrix of one block in a constraint or the objective.
#[derive(Clone, Debug)]
pub enum Coeff {
    /// Entries `(p, q, v)` with `p ≤ q` of a symmetric matrix (`A_pq = A_qp = v`).
    /// For non-negative blocks only `p = q` entries are allowed.
    Sparse(Vec<(usize, usize, f64)>),
    /// Dense symmetric matrix; PSD blocks only.
    Dense(Arc<DMatrix<f64>>),
}

impl Coeff {
    pub fn entry(p: usize, q: usize, v: f64) -> Self {
        Coeff::Sparse(vec![(p.min(q), p.max(q), v)])
    }

    /// `⟨A, W⟩ = Σ A_pq W_pq` for any (not necessarily symmetric) `W` of the block's shape.
    fn inner(&self, kind: BlockKind, w: &DMatrix<f64>) -> f64 {
        match (self, kind) {
            (Coeff::Sparse(e), BlockKind::Psd(_)) => e
                .iter()
                .map(|&(p, q, v)| if p == q { v * w[(p, p)] } else { v * (w[(p, q)] + w[(q, p)]) })
                .sum(),
            (Coeff::Sparse(e), BlockKind::Nonneg(_)) => e.iter().map(|&(p, _, v)| v * w[(p, 0)]).sum(),
            (Coeff::Dense(a), _) => a.iter().zip(w.iter()).map(|(x, y)| x * y).sum(),
        }
    }

    /// `W += α A`.
    fn axpy(&self, kind: BlockKind, alpha: f64, w: &mut DMatrix<f64>) {
        match (self, kind) {
            (Coeff::Sparse(e), BlockKind::Psd(_)) => {
                for &(p, q, v) in e {
                    w[(p, q)] += alpha * v;
                    if p != q {
                        w[(q, p)] += alpha * v;
                    }
                }
            }
            (Coeff::Sparse(e), BlockKind::Nonneg(_)) => {
                for &(p, _, v) in e {
                    w[(p, 0)] += alpha * v;
                }
            }
            (Coeff::Dense(a), _) => *w += a.as_ref() * alpha,
        }
    }

    /// `X A Z` for a PSD block.
    fn sandwich(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Coeff::Sparse(e) => {
                let n = x.nrows();
                let mut out = DMatrix::zeros(n, n);
                for &(p, q, v) in e {
                    out.ger(v, &x.column(p), &z.row(q).transpose(), 1.0);
                    if p != q {
                        out.ger(v, &x.column(q), &z.row(p).transpose(), 1.0);
                    }
                }
                out
            }
            Coeff::Dense(a) => x * a.as_ref() * z,
        }
    }

    fn norm_sqr(&self) -> f64 {
        match self {
            Coeff::Sparse(e) => e.iter().map(|&(p, q, v)| if p == q { v * v } else { 2.0 * v * v }).sum(),
            Coeff::Dense(a) => a.norm_squared(),
        }
    }

    fn validate(&self, kind: BlockKind) -> Result<()> {
        let n = kind.size();
        match (self, kind) {
            (Coeff::Sparse(e), _) => {
                for &(p, q, v) in e {
                    if p > q || q >= n || !v.is_finite() {
                        return Err(Error::invalid(format!("bad sparse entry ({p}, {q}, {v}) for block of size {n}")));
                    }
                    if matches!(kind, BlockKind::Nonneg(_)) && p != q {
                        return Err(Error::invalid("non-negative blocks take diagonal entries only"));
                    }
                }
            }
            (Coeff::Dense(a), BlockKind::Psd(_)) => {
                if a.shape() != (n, n) || a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("dense coefficient has the wrong shape or non-finite entries"));
                }
            }
            (Coeff::Dense(_), BlockKind::Nonneg(_)) => {
                return Err(Error::invalid("dense coefficients are only allowed on PSD blocks"))
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub terms: Vec<(usize, Coeff)>,
    pub rhs: f64,
    pub group: Option<usize>,
}

/// Minimization problem in the standard form above.
#[derive(Clone, Debug, Default)]
pub struct SdpProblem {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<(usize, Coeff)>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn add_block(&mut self, kind: BlockKind) -> usize {
        self.blocks.push(kind);
        self.blocks.len() - 1
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, Coeff)>, rhs: f64, group: Option<usize>) {
        self.constraints.push(Constraint { terms, rhs, group });
    }

    fn validate(&self) -> Result<()> {
        let check = |b: usize, c: &Coeff| -> Result<()> {
            let kind = *self
                .blocks
                .get(b)
                .ok_or_else(|| Error::invalid(format!("term refers to missing block {b}")))?;
            c.validate(kind)
        };
        for (b, c) in &self.objective {
            check(*b, c)?;
        }
        for con in &self.constraints {
            if !con.rhs.is_finite() {
                return Err(Error::invalid("constraint right-hand side is not finite"));
            }
            for (b, c) in &con.terms {
                check(*b, c)?;
            }
        }
        Ok(())
    }

    /// `Σ_b ⟨A_ib, X_b⟩` for every constraint.
    pub fn constraint_values(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .map(|c| c.terms.iter().map(|(b, a)| a.inner(self.blocks[*b], &x[*b])).sum()),
        )
    }

    pub fn objective_value(&self, x: &[DMatrix<f64>]) -> f64 {
        self.objective.iter().map(|(b, c)| c.inner(self.blocks[*b], &x[*b])).sum()
    }

    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.blocks.iter().map(|k| k.zeros()).collect();
        for (i, c) in self.constraints.iter().enumerate() {
            if y[i] != 0.0 {
                for (b, a) in &c.terms {
                    a.axpy(self.blocks[*b], y[i], &mut out[*b]);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpOptions {
    /// Relative duality gap `|p − d| / (1 + |p| + |d|)` at termination.
    pub gap_tol: f64,
    /// Relative primal and dual residual norms at termination.
    pub feas_tol: f64,
    /// Threshold on the normalized Farkas residual that declares infeasibility.
    pub infeas_tol: f64,
    /// Looser bound on gap and residuals accepted when progress stalls.
    pub acceptable_tol: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            feas_tol: 1e-10,
            infeas_tol: 1e-8,
            acceptable_tol: 1e-6,
            max_iterations: 200,
            step_fraction: 0.98,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    IterationCap,
}

#[derive(Clone, Debug)]
pub struct SdpResult {
    pub status: SdpStatus,
    pub x: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Absolute gap between primal and dual objectives.
    pub gap: f64,
    /// `‖b − A(X)‖ / (1 + ‖b‖)`.
    pub primal_infeasibility: f64,
    /// `‖C − A*(y) − S‖ / (1 + ‖C‖)`.
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

impl SdpResult {
    /// Maps non-optimal outcomes to errors.
    pub fn into_optimal(self) -> Result<Self> {
        match self.status {
            SdpStatus::Optimal => Ok(self),
            SdpStatus::PrimalInfeasible => Err(Error::Infeasible(format!(
                "Farkas certificate found (primal residual {:e})",
                self.primal_infeasibility
            ))),
            SdpStatus::DualInfeasible => Err(Error::Unbounded),
            SdpStatus::IterationCap => Err(Error::IterationCap(self.iterations)),
        }
    }
}

/// Real symmetric embedding `[[Re H, −Im H], [Im H, Re H]]` of a Hermitian matrix.
///
/// For Hermitian `A`, `B`: `tr(AB) = ½ tr(emb(A) emb(B))`, and `emb(A) ⪰ 0` iff `A ⪰ 0`.
pub fn embed_hermitian(h: &DMatrix<C64>) -> DMatrix<f64> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn block_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn blocks_norm(v: &[DMatrix<f64>]) -> f64 {
    v.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

/// Largest step `α` keeping `X + α·dX` in the cone.
fn max_step(kind: BlockKind, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    match kind {
        BlockKind::Nonneg(_) => x
            .iter()
            .zip(dx.iter())
            .filter(|(_, d)| **d < 0.0)
            .map(|(x, d)| -x / d)
            .fold(f64::INFINITY, f64::min),
        BlockKind::Psd(_) => {
            let Some(ch) = x.clone().cholesky() else { return 0.0 };
            let l = ch.l();
            let t = l.solve_lower_triangular(dx).expect("triangular factor is nonsingular");
            let t = l
                .solve_lower_triangular(&t.transpose())
                .expect("triangular factor is nonsingular");
            let lmin = sym(&t).symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            if lmin < 0.0 {
                -1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
    }
}

fn interior(kind: BlockKind, m: &DMatrix<f64>) -> bool {
    match kind {
        BlockKind::Nonneg(_) => m.iter().all(|v| *v > 0.0),
        BlockKind::Psd(_) => m.clone().cholesky().is_some(),
    }
}

/// `X + α dX`, backing `α` off until every block is strictly interior.
fn shrink_into_cone(
    blocks: &[BlockKind],
    x: &[DMatrix<f64>],
    dx: &[DMatrix<f64>],
    mut alpha: f64,
) -> Option<(Vec<DMatrix<f64>>, f64)> {
    for _ in 0..60 {
        let trial: Vec<DMatrix<f64>> = blocks
            .iter()
            .enumerate()
            .map(|(k, kind)| {
                let v = &x[k] + &dx[k] * alpha;
                match kind {
                    BlockKind::Psd(_) => sym(&v),
                    BlockKind::Nonneg(_) => v,
                }
            })
            .collect();
        if blocks.iter().zip(&trial).all(|(kind, m)| interior(*kind, m)) {
            return Some((trial, alpha));
        }
        alpha *= 0.5;
    }
    None
}

enum SchurFactor {
    Dense(Cholesky),
    Arrow {
        groups: Vec<(Vec<usize>, Cholesky, DMatrix<f64>)>,
        global: Vec<usize>,
        schur: Cholesky,
    },
}

impl SchurFactor {
    fn factor(m: &DMatrix<f64>, layout: Option<&(Vec<Vec<usize>>, Vec<usize>)>) -> Self {
        let Some((groups, global)) = layout else {
            return SchurFactor::Dense(Cholesky::factor(m.clone()));
        };
        let pick = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])]);
        let mut schur = pick(global, global);
        let mut out = Vec::with_capacity(groups.len());
        for g in groups {
            let ch = Cholesky::factor(pick(g, g));
            // E = D⁻¹ Bᵀ where B couples global rows to this group
            let bt = pick(g, global);
            let e = ch.solve_matrix(&bt);
            schur -= bt.transpose() * &e;
            out.push((g.clone(), ch, e));
        }
        SchurFactor::Arrow {
            groups: out,
            global: global.clone(),
            schur: Cholesky::factor(schur),
        }
    }

    fn frozen(&self) -> usize {
        match self {
            SchurFactor::Dense(ch) => ch.frozen,
            SchurFactor::Arrow { groups, schur, .. } => schur.frozen + groups.iter().map(|g| g.1.frozen).sum::<usize>(),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurFactor::Dense(ch) => ch.solve(rhs),
            SchurFactor::Arrow { groups, global, schur } => {
                let gather = |idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&i| rhs[i]));
                let mut rg = gather(global);
                let mut zs = Vec::with_capacity(groups.len());
                for (idx, ch, e) in groups {
                    let z = ch.solve(&gather(idx));
                    // B D⁻¹ r_g = Eᵀ r_g
                    rg -= e.transpose() * gather(idx);
                    zs.push(z);
                }
                let yg = schur.solve(&rg);
                let mut out = DVector::zeros(rhs.len());
                for (k, &i) in global.iter().enumerate() {
                    out[i] = yg[k];
                }
                for ((idx, _, e), z) in groups.iter().zip(zs) {
                    let yk = z - e * &yg;
                    for (k, &i) in idx.iter().enumerate() {
                        out[i] = yk[k];
                    }
                }
                out
            }
        }
    }
}

/// Splits constraints into groups touching disjoint blocks plus global rows,
/// or returns `None` when the labels do not describe such a structure.
fn arrow_layout(p: &SdpProblem) -> Option<(Vec<Vec<usize>>, Vec<usize>)> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut global = Vec::new();
    let mut owner: Vec<Option<usize>> = vec![None; p.blocks.len()];
    for (i, c) in p.constraints.iter().enumerate() {
        match c.group {
            Some(g) => {
                for (b, _) in &c.terms {
                    match owner[*b] {
                        Some(o) if o != g => return None,
                        _ => owner[*b] = Some(g),
                    }
                }
                groups.entry(g).or_default().push(i);
            }
            None => global.push(i),
        }
    }
    if groups.is_empty() {
        return None;
    }
    Some((groups.into_values().collect(), global))
}

/// Iterations without improvement before the best iterate is taken.
const STALL_ITERATIONS: usize = 25;

/// Iterative refinement passes on each Schur solve.
const REFINEMENT_STEPS: usize = 2;

/// Solves the problem; non-optimal outcomes are reported through the status.
pub fn solve_sdp(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpResult> {
    problem.validate()?;
    let p = problem;
    let m = p.constraints.len();
    let nb = p.blocks.len();
    let b = DVector::from_iterator(m, p.constraints.iter().map(|c| c.rhs));

    let mut c_blocks: Vec<DMatrix<f64>> = p.blocks.iter().map(|k| k.zeros()).collect();
    for (blk, coeff) in &p.objective {
        coeff.axpy(p.blocks[*blk], 1.0, &mut c_blocks[*blk]);
    }
    let mut touching: Vec<Vec<(usize, &Coeff)>> = vec![Vec::new(); nb];
    for (i, c) in p.constraints.iter().enumerate() {
        for (blk, coeff) in &c.terms {
            touching[*blk].push((i, coeff));
        }
    }
    let layout = arrow_layout(p);
    let dim_total: usize = p.blocks.iter().map(|k| k.size()).sum::<usize>().max(1);
    let b_norm = b.norm();
    let c_norm = blocks_norm(&c_blocks);

    let a_norms: Vec<f64> = p
        .constraints
        .iter()
        .map(|c| c.terms.iter().map(|(_, a)| a.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let xi = (0..m)
        .map(|i| (1.0 + b[i].abs()) / (1.0 + a_norms[i]))
        .fold(10.0, f64::max);
    let eta = a_norms.iter().cloned().fold(c_norm, f64::max).max(1.0) * (1.0 + (dim_total as f64).sqrt());
    let eta = eta.max(10.0);
    let mut x: Vec<DMatrix<f64>> = p.blocks.iter().map(|k| k.identity(xi)).collect();
    let mut s: Vec<DMatrix<f64>> = p.blocks.iter().map(|k| k.identity(eta)).collect();
    let mut y = DVector::zeros(m);

    let mut iterations = 0;
    let mut best: Option<(f64, SdpResult)> = None;
    let mut stalled = 0;
    loop {
        let ax = p.constraint_values(&x);
        let rp = &b - &ax;
        let aty = p.adjoint(&y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &c_blocks[k] - &aty[k] - &s[k]).collect();
        let pobj: f64 = (0..nb).map(|k| block_dot(&c_blocks[k], &x[k])).sum();
        let dobj = b.dot(&y);
        let xs: f64 = (0..nb).map(|k| block_dot(&x[k], &s[k])).sum();
        let mu = xs / dim_total as f64;
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = blocks_norm(&rd) / (1.0 + c_norm);
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        log::trace!("ipm {iterations}: p {pobj:.10e} d {dobj:.10e} gap {rel_gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}");

        let finish = |status, x: Vec<DMatrix<f64>>, y: DVector<f64>, s: Vec<DMatrix<f64>>| SdpResult {
            status,
            x,
            y,
            s,
            primal_objective: pobj,
            dual_objective: dobj,
            gap: (pobj - dobj).abs(),
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            iterations,
        };
        if rel_gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            return Ok(finish(SdpStatus::Optimal, x, y, s));
        }
        let merit = rel_gap.max(pinf).max(dinf);
        if merit < 0.999 * best.as_ref().map_or(f64::INFINITY, |b| b.0) {
            best = Some((merit, finish(SdpStatus::Optimal, x.clone(), y.clone(), s.clone())));
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= STALL_ITERATIONS || iterations >= opts.max_iterations {
            // accuracy is lost before the strict tolerances are met on
            // degenerate problems; fall back to the best iterate seen
            if let Some((m, mut r)) = best.take() {
                if m <= opts.acceptable_tol {
                    r.iterations = iterations;
                    log::debug!("sdp: accepting best iterate with merit {m:.2e}");
                    return Ok(r);
                }
            }
            if iterations >= opts.max_iterations {
                return Ok(finish(SdpStatus::IterationCap, x, y, s));
            }
        }
        if dobj > 0.0 {
            let farkas: Vec<DMatrix<f64>> = (0..nb).map(|k| &aty[k] + &s[k]).collect();
            if blocks_norm(&farkas) / dobj < opts.infeas_tol {
                return Ok(finish(SdpStatus::PrimalInfeasible, x, y, s));
            }
        }
        if pobj < 0.0 && ax.norm() / -pobj < opts.infeas_tol {
            return Ok(finish(SdpStatus::DualInfeasible, x, y, s));
        }
        if iterations >= opts.max_iterations {
            return Ok(finish(SdpStatus::IterationCap, x, y, s));
        }
        iterations += 1;

        // Schur complement M_ij = ⟨A_i, X A_j S⁻¹⟩
        let mut s_inv: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            s_inv.push(match p.blocks[k] {
                BlockKind::Psd(_) => {
                    let ch = s[k]
                        .clone()
                        .cholesky()
                        .ok_or_else(|| Error::invalid("dual slack lost positive definiteness"))?;
                    sym(&ch.inverse())
                }
                BlockKind::Nonneg(_) => s[k].map(|v| 1.0 / v),
            });
        }
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for k in 0..nb {
            let kind = p.blocks[k];
            let touch = &touching[k];
            for &(j, aj) in touch {
                let w = match kind {
                    BlockKind::Psd(_) => aj.sandwich(&x[k], &s_inv[k]),
                    BlockKind::Nonneg(_) => {
                        let mut w = kind.zeros();
                        aj.axpy(kind, 1.0, &mut w);
                        w.component_mul_assign(&x[k]);
                        w.component_mul_assign(&s_inv[k]);
                        w
                    }
                };
                for &(i, ai) in touch {
                    if i <= j {
                        schur[(i, j)] += ai.inner(kind, &w);
                    }
                }
            }
        }
        for j in 0..m {
            for i in 0..j {
                schur[(j, i)] = schur[(i, j)];
            }
        }
        let factor = SchurFactor::factor(&schur, layout.as_ref());

        let direction = |r: &[DMatrix<f64>]| -> (Vec<DMatrix<f64>>, DVector<f64>, Vec<DMatrix<f64>>) {
            // rhs = rp − A(R) + A(X Rd S⁻¹)
            let mut t: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
            for k in 0..nb {
                t.push(match p.blocks[k] {
                    BlockKind::Psd(_) => &r[k] - sym(&(&x[k] * &rd[k] * &s_inv[k])),
                    BlockKind::Nonneg(_) => &r[k] - x[k].component_mul(&rd[k]).component_mul(&s_inv[k]),
                });
            }
            let rhs = &rp - p.constraint_values(&t);
            let mut dy = factor.solve(&rhs);
            for _ in 0..REFINEMENT_STEPS {
                let res = &rhs - &schur * &dy;
                dy += factor.solve(&res);
            }
            let atdy = p.adjoint(&dy);
            let ds: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - &atdy[k]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| match p.blocks[k] {
                    BlockKind::Psd(_) => &r[k] - sym(&(&x[k] * &ds[k] * &s_inv[k])),
                    BlockKind::Nonneg(_) => &r[k] - x[k].component_mul(&ds[k]).component_mul(&s_inv[k]),
                })
                .collect();
            (dx, dy, ds)
        };
        let steps = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(p.blocks[k], &x[k], &dx[k]));
                ad = ad.min(max_step(p.blocks[k], &s[k], &ds[k]));
            }
            ((opts.step_fraction * ap).min(1.0), (opts.step_fraction * ad).min(1.0))
        };

        // predictor
        let r_aff: Vec<DMatrix<f64>> = x.iter().map(|v| -v).collect();
        let (dxa, _, dsa) = direction(&r_aff);
        let (ap, ad) = steps(&dxa, &dsa);
        let mu_aff: f64 = (0..nb)
            .map(|k| block_dot(&(&x[k] + &dxa[k] * ap), &(&s[k] + &dsa[k] * ad)))
            .sum::<f64>()
            / dim_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let r_cor: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| match p.blocks[k] {
                BlockKind::Psd(_) => {
                    &s_inv[k] * (sigma * mu) - &x[k] - sym(&(&dxa[k] * &dsa[k] * &s_inv[k]))
                }
                BlockKind::Nonneg(_) => {
                    s_inv[k].map(|v| v * sigma * mu) - &x[k] - dxa[k].component_mul(&dsa[k]).component_mul(&s_inv[k])
                }
            })
            .collect();
        let (dx, dy, ds) = direction(&r_cor);
        let (ap, ad) = steps(&dx, &ds);
        log::trace!("steps {ap:.3e} {ad:.3e} sigma {sigma:.2e} frozen {}", factor.frozen());
        // the eigenvalue step bound can be optimistic in floating point
        let x_new = shrink_into_cone(&p.blocks, &x, &dx, ap);
        let s_new = shrink_into_cone(&p.blocks, &s, &ds, ad);
        let (Some((x_new, _)), Some((s_new, ad))) = (x_new, s_new) else {
            return Err(Error::invalid("interior-point iterate left the cone"));
        };
        x = x_new;
        s = s_new;
        y += dy * ad;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one_problem(rhs: f64) -> SdpProblem {
        let mut p = SdpProblem::default();
        let x = p.add_block(BlockKind::Psd(1));
        p.objective.push((x, Coeff::entry(0, 0, -1.0)));
        p.add_constraint(vec![(x, Coeff::entry(0, 0, 1.0))], rhs, None);
        p
    }

    #[test]
    fn max_trace_under_identity_bound() {
        // maximize X s.t. X + t = 1, X, t ≥ 0
        let mut p = SdpProblem::default();
        let x = p.add_block(BlockKind::Psd(1));
        let t = p.add_block(BlockKind::Nonneg(1));
        p.objective.push((x, Coeff::entry(0, 0, -1.0)));
        p.add_constraint(vec![(x, Coeff::entry(0, 0, 1.0)), (t, Coeff::entry(0, 0, 1.0))], 1.0, None);
        let r = solve_sdp(&p, &SdpOptions::default()).unwrap().into_optimal().unwrap();
        assert!((r.primal_objective + 1.0).abs() < 1e-8);
        assert!(r.gap <= 1e-6);
    }

    #[test]
    fn infeasible_trace() {
        let r = solve_sdp(&one_by_one_problem(-1.0), &SdpOptions::default()).unwrap();
        assert_eq!(r.status, SdpStatus::PrimalInfeasible);
        assert!(matches!(r.into_optimal(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn unbounded_detected() {
        // minimize −X₀₀ with only X₁₁ fixed
        let mut p = SdpProblem::default();
        let x = p.add_block(BlockKind::Psd(2));
        p.objective.push((x, Coeff::entry(0, 0, -1.0)));
        p.add_constraint(vec![(x, Coeff::entry(1, 1, 1.0))], 1.0, None);
        let r = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(r.status, SdpStatus::DualInfeasible);
    }

    #[test]
    fn largest_eigenvalue() {
        // max ⟨C, X⟩ s.t. tr X = 1 equals λ_max(C)
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let lmax = c.clone().symmetric_eigenvalues().max();
        let mut p = SdpProblem::default();
        let x = p.add_block(BlockKind::Psd(3));
        p.objective.push((x, Coeff::Dense(Arc::new(-c))));
        p.add_constraint(vec![(x, Coeff::Sparse((0..3).map(|i| (i, i, 1.0)).collect()))], 1.0, None);
        let r = solve_sdp(&p, &SdpOptions::default()).unwrap().into_optimal().unwrap();
        assert!((-r.primal_objective - lmax).abs() < 1e-8);
    }

    #[test]
    fn grouped_and_dense_schur_agree() {
        // two independent trace-normalized blocks coupled by one global row
        let build = |grouped: bool| {
            let mut p = SdpProblem::default();
            let blocks: Vec<usize> = (0..2).map(|_| p.add_block(BlockKind::Psd(2))).collect();
            for (g, &blk) in blocks.iter().enumerate() {
                let c = DMatrix::from_row_slice(2, 2, &[1.0 + g as f64, 0.3, 0.3, 0.5]);
                p.objective.push((blk, Coeff::Dense(Arc::new(-c))));
                p.add_constraint(vec![(blk, Coeff::entry(0, 1, 0.5))], 0.1 * g as f64, grouped.then_some(g));
            }
            let trace = |blk| (blk, Coeff::Sparse(vec![(0, 0, 1.0), (1, 1, 1.0)]));
            p.add_constraint(vec![trace(blocks[0]), trace(blocks[1])], 1.0, None);
            p
        };
        let a = solve_sdp(&build(true), &SdpOptions::default()).unwrap().into_optimal().unwrap();
        let b = solve_sdp(&build(false), &SdpOptions::default()).unwrap().into_optimal().unwrap();
        assert!((a.primal_objective - b.primal_objective).abs() < 1e-8);
        assert!(arrow_layout(&build(true)).is_some());
        assert!(arrow_layout(&build(false)).is_none());
    }

    #[test]
    fn hermitian_embedding_preserves_trace_products() {
        let a = DMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(0.2, 0.3), C64::new(0.2, -0.3), C64::new(0.5, 0.0)]);
        let b = DMatrix::from_row_slice(2, 2, &[C64::new(0.4, 0.0), C64::new(-0.1, 0.7), C64::new(-0.1, -0.7), C64::new(2.0, 0.0)]);
        let direct = (&a * &b).trace().re;
        let embedded = 0.5 * (embed_hermitian(&a) * embed_hermitian(&b)).trace();
        assert!((direct - embedded).abs() < 1e-14);
    }

    #[test]
    fn rejects_malformed_terms() {
        let mut p = one_by_one_problem(1.0);
        p.add_constraint(vec![(3, Coeff::entry(0, 0, 1.0))], 1.0, None);
        assert!(solve_sdp(&p, &SdpOptions::default()).is_err());
    }
}
