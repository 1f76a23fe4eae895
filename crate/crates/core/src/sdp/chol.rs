//! Dense Cholesky for Schur complement systems.
//!
//! Interior-point Schur matrices become badly conditioned near the optimum
//! and are singular when constraints are linearly dependent. Pivots that
//! collapse relative to their own diagonal entry are replaced by a huge value, which
//! freezes the corresponding component of the step instead of failing.

use nalgebra::{DMatrix, DVector};

const PIVOT_REL_TOL: f64 = 1e-15;
const FROZEN_PIVOT: f64 = 1e64;

#[derive(Clone, Debug)]
pub(crate) struct Cholesky {
    l: DMatrix<f64>,
    pub frozen: usize,
}

impl Cholesky {
    pub fn factor(mut a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut frozen = 0;
        for j in 0..n {
            let scale = a[(j, j)].abs().max(f64::MIN_POSITIVE);
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= a[(j, k)] * a[(j, k)];
            }
            if !(d > PIVOT_REL_TOL * scale) {
                d = FROZEN_PIVOT;
                frozen += 1;
            }
            let ljj = d.sqrt();
            a[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= a[(i, k)] * a[(j, k)];
                }
                a[(i, j)] = s / ljj;
            }
        }
        for j in 0..n {
            for i in 0..j {
                a[(i, j)] = 0.0;
            }
        }
        Self { l: a, frozen }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            out.set_column(c, &self.solve(&b.column(c).into_owned()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let ch = Cholesky::factor(a.clone());
        assert_eq!(ch.frozen, 0);
        let x = ch.solve(&b);
        assert!((a * x - b).norm() < 1e-12);
    }

    #[test]
    fn dependent_rows_are_frozen() {
        // second row duplicates the first
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let ch = Cholesky::factor(a);
        assert_eq!(ch.frozen, 1);
        let x = ch.solve(&DVector::from_vec(vec![1.0, 1.0, 2.0]));
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12 && (x[2] - 1.0).abs() < 1e-12);
    }
}
