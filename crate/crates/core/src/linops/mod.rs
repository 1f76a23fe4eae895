//! Complex linear algebra for path-encoded qudits.
//!
//! Matrices are dense `nalgebra` matrices over [`C64`]. Two newtypes carry
//! the invariants the rest of the crate relies on: [`UnitaryMatrix`] is
//! checked against `U†U = I` on construction, [`PathQuditState`] is a unit
//! vector over the core modes.

mod fock;

pub use fock::{two_photon_basis, two_photon_evolve, Occupation, TwoPhotonFockState};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Maximum absolute entry deviation of `U†U` from the identity accepted for a unitary.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Accepted deviation of a state norm from one.
pub const NORM_TOL: f64 = 1e-12;
/// Smallest singular value accepted by [`unitarize`].
pub const SINGULAR_TOL: f64 = 1e-12;

/// Sign pattern shared by the symmetric 4-port beamsplitter at zero phase and
/// the measurement basis states.
pub const SIGNS_4: [[f64; 4]; 4] = [
    [1.0, 1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0, -1.0],
    [1.0, -1.0, 1.0, -1.0],
    [1.0, -1.0, -1.0, 1.0],
];

/// Dense complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch {
                expected: ncols,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(nrows, ncols, |j, k| rows[j][k]))
    }

    pub fn from_fn(nrows: usize, ncols: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(DMatrix::from_fn(nrows, ncols, f))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.0.is_square()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    /// Largest `|(M†M − I)_jk|`.
    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.nrows();
        let g = self.0.adjoint() * &self.0;
        let mut worst = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g[(j, k)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Returns a copy with the rows reordered so that row `i` of the result is
    /// row `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.nrows(),
                got: order.len(),
            });
        }
        Self::from_fn(self.nrows(), self.ncols(), |j, k| self.0[(order[j], k)])
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.nrows())
            .map(|j| (0..self.ncols()).map(|k| [self.0[(j, k)].re, self.0[(j, k)].im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Square matrix satisfying `U†U = I` to [`UNITARITY_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "unitary must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let err = m.unitarity_error();
        if err > UNITARITY_TOL {
            return Err(Error::invalid(format!("matrix is not unitary (deviation {err:e})")));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0.get(row, col)
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        UnitaryMatrix(self.0.adjoint())
    }

    /// First row and first column real and non-negative within `tol`.
    pub fn is_real_border(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| {
            let a = self.get(0, i);
            let b = self.get(i, 0);
            a.im.abs() <= tol && a.re >= -tol && b.im.abs() <= tol && b.re >= -tol
        })
    }
}

impl AsRef<ComplexMatrix> for UnitaryMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

impl<'de> Deserialize<'de> for UnitaryMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = ComplexMatrix::deserialize(d)?;
        UnitaryMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Unit vector of complex amplitudes over the core modes.
#[derive(Clone, Debug, PartialEq)]
pub struct PathQuditState(DVector<C64>);

impl PathQuditState {
    /// Wraps an already normalized amplitude vector.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if v.is_empty() || (norm2 - 1.0).abs() > NORM_TOL || !norm2.is_finite() {
            return Err(Error::invalid(format!("state is not normalized (norm² = {norm2})")));
        }
        Ok(Self(v))
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(DVector::from_iterator(
            amplitudes.len(),
            amplitudes.into_iter().map(|z| z / norm),
        )))
    }

    /// Single photon in mode `k`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<C64> {
        &self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PathQuditState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.0.dotc(&other.0))
    }
}

/// Symmetric 4×4 multi-port beamsplitter with internal phase `phi`.
pub fn symmetric_bs_4(phi: f64) -> UnitaryMatrix {
    let e = C64::from_polar(1.0, phi);
    let one = C64::new(1.0, 0.0);
    let rows = [
        [one, one, one, one],
        [one, e, -one, -e],
        [one, -one, one, -one],
        [one, -e, -one, e],
    ];
    let m = DMatrix::from_fn(4, 4, |j, k| rows[j][k] * 0.5);
    UnitaryMatrix(ComplexMatrix(m))
}

/// Matrix fidelity `|Tr(A†B)|² / N²`.
pub fn matrix_fidelity(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if !a.is_square() || !b.is_square() {
        return Err(Error::invalid("fidelity needs square matrices"));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let n = a.nrows() as f64;
    let tr: C64 = a.0.iter().zip(b.0.iter()).map(|(x, y)| x.conj() * y).sum();
    Ok(tr.norm_sqr() / (n * n))
}

/// Output-port relabeling of `a` that maximizes its fidelity with `b`.
///
/// Detector labels on a physical device are a convention, so a reconstructed
/// matrix may be compared with a model only up to a permutation of its rows.
/// Returns the row order (row `i` of the relabeled matrix is row `order[i]` of
/// `a`) and the resulting fidelity. Exhaustive, intended for `N ≤ 8`.
pub fn best_output_relabeling(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<(Vec<usize>, f64)> {
    let n = a.nrows();
    if n > 8 {
        return Err(Error::invalid("exhaustive relabeling is limited to N ≤ 8"));
    }
    matrix_fidelity(a, b)?;
    // overlap[i][j] = Σ_k conj(a_ik) b_jk: contribution of putting row i of `a` at position j
    let overlap: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a.get(i, k).conj() * b.get(j, k)).sum())
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = (order.clone(), -1.0);
    permute(&mut order, 0, &mut |perm| {
        let tr: C64 = perm.iter().enumerate().map(|(j, &i)| overlap[i][j]).sum();
        let f = tr.norm_sqr() / (n * n) as f64;
        if f > best.1 {
            best = (perm.to_vec(), f);
        }
    });
    Ok(best)
}

fn permute(items: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Prepared path qudit `½ Σ_k e^{iφ_k} |k⟩`.
pub fn prepare_state(phases: [f64; 4]) -> PathQuditState {
    PathQuditState(DVector::from_iterator(
        4,
        phases.iter().map(|&p| C64::from_polar(0.5, p)),
    ))
}

/// The four measurement basis states selected by the measurement-stage phases.
pub fn measurement_basis(phases: [f64; 4]) -> [PathQuditState; 4] {
    std::array::from_fn(|a| {
        PathQuditState(DVector::from_fn(4, |k, _| {
            C64::from_polar(0.5, phases[k]) * SIGNS_4[a][k]
        }))
    })
}

/// Unitary mapping path modes onto detectors: row `a` is `⟨ψ_a|`.
pub fn measurement_unitary(phases: [f64; 4]) -> UnitaryMatrix {
    let basis = measurement_basis(phases);
    let m = DMatrix::from_fn(4, 4, |a, k| basis[a].amplitudes()[k].conj());
    UnitaryMatrix(ComplexMatrix(m))
}

/// Born-rule probabilities `|⟨ψ_a|input⟩|²` for each basis state.
pub fn single_photon_outcome_probs(basis: &[PathQuditState], input: &PathQuditState) -> Result<Vec<f64>> {
    basis
        .iter()
        .map(|b| b.inner(input).map(|z| z.norm_sqr()))
        .collect()
}

/// Unitary polar factor `Z(Z†Z)^{-1/2}`.
pub fn unitarize(z: &ComplexMatrix) -> Result<UnitaryMatrix> {
    if !z.is_square() {
        return Err(Error::invalid("unitarize needs a square matrix"));
    }
    let svd = z.0.clone().svd(true, true);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > SINGULAR_TOL) {
        return Err(Error::Singular(smin));
    }
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    UnitaryMatrix::new(ComplexMatrix(u * vt))
}
