//! Small dense symmetric-matrix helpers built on a thresholded Cholesky factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A pivot below this fraction of the largest diagonal entry marks the matrix singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        if n == 0 || !(max_diag > 0.0) || !max_diag.is_finite() {
            return Err(Error::Singular);
        }
        let tol = PIVOT_TOL * max_diag;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return Err(Error::Singular);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.l.nrows();
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `L^-1 b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.nrows();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `b' A^-1 b`, via one triangular solve.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let n = self.l.nrows();
        let mut y = vec![0.0; n];
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
            acc += y[i] * y[i];
        }
        acc
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.l.nrows();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::<f64>::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        symmetrize(&mut inv);
        inv
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `log det A`, or `None` when `A` is singular to the pivot threshold.
pub fn logdet(a: &DMatrix<f64>) -> Option<f64> {
    Cholesky::new(a).ok().map(|c| c.logdet())
}

/// `A += w * f f'`.
pub fn add_rank_one(a: &mut DMatrix<f64>, w: f64, f: &[f64]) {
    let n = f.len();
    for i in 0..n {
        let wi = w * f[i];
        for j in 0..=i {
            a[(i, j)] += wi * f[j];
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
    }
}

/// `trace(A B)` for symmetric `A`, `B`.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// A unit vector spanning (approximately) the null space of a wide matrix,
/// taken from the smallest singular direction.
pub fn null_vector(a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = a.ncols();
    // A'A is n x n; its smallest eigenvector spans the null space when rows < cols.
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))?;
    let v = eig.eigenvectors.column(idx).into_owned();
    (v.len() == n).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_roundtrip() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let c = Cholesky::new(&a).unwrap();
        let back = c.l() * c.l().transpose();
        assert!((back - &a).abs().max() < 1e-14);
        let expect = a.clone().determinant().ln();
        assert!((c.logdet() - expect).abs() < 1e-13);
        let inv = c.inverse();
        assert!((&a * inv - DMatrix::identity(3, 3)).abs().max() < 1e-13);
        let b = [1.0, -2.0, 0.5];
        let bv = DVector::from_row_slice(&b);
        let q = (bv.transpose() * a.clone().try_inverse().unwrap() * &bv)[0];
        assert!((c.quad_form(&b) - q).abs() < 1e-13);
    }

    #[test]
    fn singular_matrices_are_detected() {
        let mut a = DMatrix::zeros(2, 2);
        add_rank_one(&mut a, 1.0, &[1.0, 2.0]);
        assert!(Cholesky::new(&a).is_err());
        assert!(logdet(&DMatrix::zeros(2, 2)).is_none());
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(logdet(&nearly).is_none());
    }

    #[test]
    fn null_vector_of_wide_matrix() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let v = null_vector(&a).unwrap();
        assert!((&a * &v).norm() < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}
