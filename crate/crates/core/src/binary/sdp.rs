//! Vector relaxation of the homogenized binary program.
//!
//! Maximizes `<Q', V^T V> + z` over unit vectors `v_0 .. v_n` by block
//! coordinate ascent: each `v_i` is set to the normalized weighted sum
//! `sum_j Q'_ij v_j`. With rank `n + 1` every local optimum is global. A dual
//! certificate bounds the gap.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::QuadraticForm;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 200_000;
const INIT_SEED: u64 = 0x5eed_0f_5d9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Number of rows of `V`; defaults to `n + 1`.
    pub rank: Option<usize>,
    pub seed: u64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            rank: None,
            seed: INIT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpResiduals {
    /// `max_i | ||v_i|| - 1 |`.
    pub unit_norm: f64,
    /// Relative first-order residual on the product of spheres.
    pub stationarity: f64,
    /// `max(0, -lambda_min(Diag(lambda) - Q'))`.
    pub dual_infeasibility: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    /// Column `i` is the unit vector `nu_i`; the last column belongs to the
    /// homogenizing coordinate.
    pub vectors: DMatrix<f64>,
    pub sdp_objective: f64,
    /// Upper bound on the relaxation value from the dual certificate.
    pub dual_bound: f64,
    pub residuals: SdpResiduals,
}

impl SdpSolution {
    pub fn gram(&self) -> DMatrix<f64> {
        self.vectors.transpose() * &self.vectors
    }

    /// Relative gap between the primal value and the dual bound.
    pub fn duality_gap(&self) -> f64 {
        (self.dual_bound - self.sdp_objective) / (1.0 + self.sdp_objective.abs())
    }
}

pub fn solve_sdp_relaxation(qf: &QuadraticForm, tol: f64) -> Result<SdpSolution> {
    solve_sdp_with(
        qf,
        &SdpOptions {
            tol,
            ..SdpOptions::default()
        },
    )
}

pub fn solve_sdp_with(qf: &QuadraticForm, opts: &SdpOptions) -> Result<SdpSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let c = qf.homogenized();
    let m = c.nrows();
    let k = opts.rank.unwrap_or(m).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DMatrix::from_fn(k, m, |_, _| StandardNormal.sample(&mut rng));
    for mut col in v.column_iter_mut() {
        col.normalize_mut();
    }

    let mut sweeps = 0;
    let mut stationarity = stationarity_of(&v, &c);
    while stationarity > opts.tol && sweeps < opts.max_sweeps {
        for i in 0..m {
            let g: DVector<f64> = &v * c.column(i);
            let norm = g.norm();
            if norm > 0.0 {
                v.set_column(i, &(g / norm));
            }
        }
        sweeps += 1;
        stationarity = stationarity_of(&v, &c);
    }
    if stationarity > opts.tol {
        return Err(Error::SdpNonConvergence {
            iterations: sweeps,
            stationarity,
        });
    }

    let grad = &v * &c;
    let lambda: DVector<f64> =
        DVector::from_iterator(m, (0..m).map(|i| v.column(i).dot(&grad.column(i))));
    let primal = lambda.sum() + qf.z;
    let slack = DMatrix::from_diagonal(&lambda) - &c;
    let min_eig = symmetric_eigenvalues(&slack)[0];
    let dual_infeasibility = (-min_eig).max(0.0);
    let unit_norm = v
        .column_iter()
        .map(|col| (col.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(SdpSolution {
        vectors: v,
        sdp_objective: primal,
        dual_bound: primal + m as f64 * dual_infeasibility,
        residuals: SdpResiduals {
            unit_norm,
            stationarity,
            dual_infeasibility,
            sweeps,
        },
    })
}

fn stationarity_of(v: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let grad = v * c;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..c.ncols() {
        let g = grad.column(i);
        let vi = v.column(i);
        let tangent = g - vi * vi.dot(&g);
        // anti-aligned vectors are stationary but not maximal
        let misaligned = if vi.dot(&g) < 0.0 { g.norm() } else { 0.0 };
        worst = worst.max(tangent.norm()).max(misaligned);
        scale = scale.max(g.norm());
    }
    worst / (1.0 + scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(qhat: &[f64], d: &[f64], z: f64) -> QuadraticForm {
        let n = d.len();
        QuadraticForm {
            qhat: DMatrix::from_row_slice(n, n, qhat),
            d: DVector::from_column_slice(d),
            z,
        }
    }

    #[test]
    fn zero_form_is_trivially_optimal() {
        let qf = form(&[0.0; 4], &[0.0, 0.0], 1.5);
        let sol = solve_sdp_relaxation(&qf, 1e-8).unwrap();
        assert_eq!(sol.sdp_objective, 1.5);
        assert_eq!(sol.residuals.sweeps, 0);
    }

    #[test]
    fn linear_form_is_tight() {
        // max 2 d^T y over signs is 2 |d|_1
        let qf = form(&[0.0; 9], &[0.5, -1.0, 0.25], 0.0);
        let sol = solve_sdp_relaxation(&qf, 1e-9).unwrap();
        assert!((sol.sdp_objective - 3.5).abs() < 1e-7);
        assert!(sol.duality_gap() < 1e-6);
    }

    #[test]
    fn triangle_max_cut_value() {
        // y^T Q y with Q = -J + I over three nodes: relaxation 1.5, integer 1
        let qhat = [0.0, -0.5, -0.5, -0.5, 0.0, -0.5, -0.5, -0.5, 0.0];
        let qf = form(&qhat, &[0.0; 3], 0.0);
        let sol = solve_sdp_relaxation(&qf, 1e-9).unwrap();
        assert!((sol.sdp_objective - 1.5).abs() < 1e-6, "{}", sol.sdp_objective);
        assert!(sol.residuals.unit_norm < 1e-12);
        assert!(sol.residuals.dual_infeasibility < 1e-6);
    }

    #[test]
    fn non_convergence_is_reported() {
        let qhat = [0.0, -0.5, -0.5, -0.5, 0.0, -0.5, -0.5, -0.5, 0.0];
        let qf = form(&qhat, &[0.1, 0.0, -0.2], 0.0);
        let opts = SdpOptions {
            tol: 1e-14,
            max_sweeps: 1,
            ..SdpOptions::default()
        };
        assert!(matches!(
            solve_sdp_with(&qf, &opts),
            Err(Error::SdpNonConvergence { iterations: 1, .. })
        ));
    }
}
