//! Dense linear-algebra helpers shared by the solvers.
//!
//! Everything here is a thin layer over `nalgebra` factorizations. Systems are
//! always solved through an LU or Cholesky factor; no routine forms an explicit
//! inverse unless a caller asks for all columns of one.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Relative pivot threshold below which an LU factor is treated as singular.
const PIVOT_EPS: f64 = 1e-13;

/// LU factorization of a square matrix with a singularity guard.
pub struct Factorized {
    lu: LU<f64, Dyn, Dyn>,
    context: &'static str,
}

impl Factorized {
    pub fn new(m: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.amax().max(1.0);
        let lu = m.clone().lu();
        let u = lu.u();
        let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
        if m.nrows() > 0 && !(min_pivot > PIVOT_EPS * scale) {
            return Err(Error::Singular { context });
        }
        Ok(Self { lu, context })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu
            .solve(b)
            .ok_or(Error::Singular { context: self.context })
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(b)
            .ok_or(Error::Singular { context: self.context })
    }
}

/// Solve `m x = b` by LU.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    Factorized::new(m, context)?.solve(b)
}

/// Largest eigenvalue modulus of a general square matrix (real Schur route).
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factor of `h` if `lambda_min(h) > tol`, otherwise the smallest eigenvalue.
///
/// The factorization is attempted on `h - tol I`, which succeeds exactly when every
/// eigenvalue of `h` exceeds `tol`; the eigenvalue is only computed on failure.
pub fn cholesky_above(
    h: &DMatrix<f64>,
    tol: f64,
) -> std::result::Result<Cholesky<f64, Dyn>, f64> {
    let n = h.nrows();
    let shifted = h - DMatrix::identity(n, n) * tol;
    match Cholesky::new(shifted) {
        Some(_) => Cholesky::new(h.clone()).ok_or(tol),
        None => Err(symmetric_eigenvalues(h).first().copied().unwrap_or(0.0)),
    }
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
