//! Second-stage consumer subgame: equilibrium investments for a fixed price vector.
//!
//! Consumer `i` maximizes
//! `u_i = alpha_i x_i - beta_i x_i^2 + x_i sum_j h_ij x_j - p_i x_i`,
//! whose best response is `x_i = (alpha_i - p_i + sum_j h_ij x_j) / (2 beta_i)`.
//! Stacking the best responses gives `(Q - G) x = alpha - p`.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs_diff};
use crate::network::ExternalityNetwork;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Closed form and iteration are considered to agree within this max-norm gap.
const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(pub DVector<f64>);

impl PriceVector {
    pub fn uniform(n: usize, p: f64) -> Self {
        Self(DVector::from_element(n, p))
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvestmentVector(pub DVector<f64>);

impl InvestmentVector {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    /// Every consumer buys a strictly positive amount.
    pub fn interior(&self) -> bool {
        self.0.iter().all(|x| *x > 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector(pub DVector<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCheck {
    /// `rho(Q^{-1} G)`.
    pub radius: f64,
    /// `I - Q^{-1} G` is invertible (implied by `radius < 1`).
    pub invertible: bool,
}

pub fn spectral_radius_check(net: &ExternalityNetwork) -> Result<SpectralCheck> {
    let q_inv = net.q_inv_diag()?;
    let mut m = net.g().clone();
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= q_inv[i];
    }
    let radius = linalg::spectral_radius(&m);
    Ok(SpectralCheck {
        radius,
        invertible: radius < 1.0,
    })
}

/// Errors unless `rho(Q^{-1} G) < 1`. Strictly concave networks pass on the
/// row-sum bound without an eigenvalue computation.
pub fn ensure_spectral_condition(net: &ExternalityNetwork) -> Result<()> {
    net.ensure_positive_beta()?;
    if net.strictly_concave() {
        return Ok(());
    }
    let check = spectral_radius_check(net)?;
    if check.invertible {
        Ok(())
    } else {
        Err(Error::SpectralCondition {
            radius: check.radius,
        })
    }
}

/// Weighted Bonacich centrality `(I - G D)^{-1} w` for a diagonal `D` given by
/// its diagonal entries.
pub fn bonacich(g: &DMatrix<f64>, d: &DVector<f64>, w: &DVector<f64>) -> Result<CentralityVector> {
    if !g.is_square() {
        return Err(Error::NotSquare {
            rows: g.nrows(),
            cols: g.ncols(),
        });
    }
    let n = g.nrows();
    if d.len() != n {
        return Err(Error::DimensionMismatch {
            what: "diagonal",
            expected: n,
            found: d.len(),
        });
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: n,
            found: w.len(),
        });
    }
    let mut gd = g.clone();
    for (j, mut col) in gd.column_iter_mut().enumerate() {
        col *= d[j];
    }
    let row_bound = gd.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
    let col_bound = gd.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    if row_bound.min(col_bound) >= 1.0 {
        let radius = linalg::spectral_radius(&gd);
        if radius >= 1.0 {
            return Err(Error::SpectralCondition { radius });
        }
    }
    let system = DMatrix::identity(n, n) - gd;
    Ok(CentralityVector(linalg::solve(&system, w, "Bonacich centrality")?))
}

/// Equilibrium investments `x = (Q - G)^{-1} (alpha - p)` for any price vector.
pub fn ne_closed_form(net: &ExternalityNetwork, p: &PriceVector) -> Result<InvestmentVector> {
    check_prices(net, p)?;
    ensure_spectral_condition(net)?;
    let rhs = net.alpha() - &p.0;
    let x = linalg::solve(&net.response_matrix(), &rhs, "subgame equilibrium")?;
    Ok(InvestmentVector(x))
}

fn check_prices(net: &ExternalityNetwork, p: &PriceVector) -> Result<()> {
    if p.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: "prices",
            expected: net.n(),
            found: p.len(),
        });
    }
    if p.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite price".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseOutcome {
    pub investments: InvestmentVector,
    pub iterations: usize,
    /// Max-norm size of the final step.
    pub residual: f64,
    /// Some best response was negative and was clamped at zero.
    pub clamped: bool,
}

/// Synchronous best-response (Jacobi) iteration from `x0`.
pub fn ne_best_response_iteration(
    net: &ExternalityNetwork,
    p: &PriceVector,
    x0: &InvestmentVector,
    tol: f64,
    max_iter: usize,
) -> Result<BestResponseOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
    }
    check_prices(net, p)?;
    if x0.0.len() != net.n() {
        return Err(Error::DimensionMismatch {
            what: "initial investments",
            expected: net.n(),
            found: x0.0.len(),
        });
    }
    let q_inv = net.q_inv_diag()?;
    let base = net.alpha() - &p.0;
    let g = net.g();
    let mut x = x0.0.clone();
    let mut clamped = false;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = g * &x;
        next += &base;
        for i in 0..next.len() {
            next[i] *= q_inv[i];
            if next[i] < 0.0 {
                next[i] = 0.0;
                clamped = true;
            }
        }
        residual = max_abs_diff(&next, &x);
        x = next;
        if residual < tol {
            return Ok(BestResponseOutcome {
                investments: InvestmentVector(x),
                iterations: it,
                residual,
                clamped,
            });
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        residual,
        last: x.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgameSolution {
    /// Iterated (clamped) equilibrium; equals the closed form when interior.
    pub investments: InvestmentVector,
    pub closed_form: InvestmentVector,
    pub clamped: bool,
    /// Closed form and iteration agree within `1e-6`.
    pub agrees: bool,
}

/// Solves the subgame both ways and warns when a corner solution makes the
/// closed form differ from the clamped iteration.
pub fn solve_subgame(net: &ExternalityNetwork, p: &PriceVector) -> Result<SubgameSolution> {
    let closed_form = ne_closed_form(net, p)?;
    let start = InvestmentVector(closed_form.0.map(|v| v.max(0.0)));
    let iterated = ne_best_response_iteration(net, p, &start, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let gap = max_abs_diff(&iterated.investments.0, &closed_form.0);
    let agrees = gap <= AGREEMENT_TOL;
    if !agrees {
        warn!("closed-form equilibrium leaves the nonnegative orthant (gap {gap:e}); using clamped iteration");
    }
    Ok(SubgameSolution {
        investments: iterated.investments,
        closed_form,
        clamped: iterated.clamped,
        agrees,
    })
}

/// Utility of consumer `i` at investment profile `x` and own price `p_i`.
pub fn utility(net: &ExternalityNetwork, i: usize, x: &DVector<f64>, p_i: f64) -> f64 {
    let xi = x[i];
    let spill: f64 = net.g().row(i).iter().zip(x.iter()).map(|(h, xj)| h * xj).sum();
    net.alpha()[i] * xi - net.beta()[i] * xi * xi + xi * spill - p_i * xi
}

/// Max over consumers of `|du_i/dx_i|` at `x`.
pub fn first_order_residual(net: &ExternalityNetwork, x: &DVector<f64>, p: &PriceVector) -> f64 {
    let spill = net.g() * x;
    (0..net.n())
        .map(|i| (net.alpha()[i] - p.0[i] - 2.0 * net.beta()[i] * x[i] + spill[i]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap_net() -> ExternalityNetwork {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        ExternalityNetwork::homogeneous(g, 2.0, 2.0, 0.5).unwrap()
    }

    #[test]
    fn zero_matrix_radius() {
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(3, 3), 2.0, 2.0, 0.5).unwrap();
        let c = spectral_radius_check(&net).unwrap();
        assert_eq!(c.radius, 0.0);
        assert!(c.invertible);
    }

    #[test]
    fn two_node_radius_is_quarter() {
        let c = spectral_radius_check(&swap_net()).unwrap();
        assert!((c.radius - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_is_an_error() {
        let net = ExternalityNetwork::new(
            DMatrix::zeros(2, 2),
            DVector::from_element(2, 2.0),
            DVector::from_vec(vec![1.0, 0.0]),
            0.5,
        )
        .unwrap();
        assert!(matches!(
            spectral_radius_check(&net),
            Err(Error::SingularCurvature { index: 1, .. })
        ));
    }

    #[test]
    fn bonacich_identity_and_two_node() {
        let w = DVector::from_vec(vec![0.3, 0.7]);
        let b = bonacich(&DMatrix::zeros(2, 2), &DVector::from_element(2, 0.25), &w).unwrap();
        assert_eq!(b.0, w);
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = bonacich(&g, &DVector::from_element(2, 0.25), &DVector::from_element(2, 0.75)).unwrap();
        assert!((b.0[0] - 1.0).abs() < 1e-14 && (b.0[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bonacich_reports_offending_radius() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let err = bonacich(&g, &DVector::from_element(2, 2.0), &DVector::from_element(2, 1.0)).unwrap_err();
        match err {
            Error::SpectralCondition { radius } => assert!((radius - 2.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_form_without_externalities() {
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(4, 4), 2.0, 2.0, 0.5).unwrap();
        let x = ne_closed_form(&net, &PriceVector::uniform(4, 1.0)).unwrap();
        assert!(x.0.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn closed_form_two_node() {
        let x = ne_closed_form(&swap_net(), &PriceVector::uniform(2, 1.0)).unwrap();
        assert!((x.0[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((x.0[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn iteration_one_step_without_externalities() {
        let net = ExternalityNetwork::new(
            DMatrix::zeros(3, 3),
            DVector::from_vec(vec![2.0, 3.0, 2.5]),
            DVector::from_vec(vec![1.0, 2.0, 4.0]),
            0.5,
        )
        .unwrap();
        let p = PriceVector::uniform(3, 1.0);
        let x0 = InvestmentVector(DVector::from_vec(vec![5.0, 0.0, 9.0]));
        let out = ne_best_response_iteration(&net, &p, &x0, 1e-12, 10).unwrap();
        // one step lands on the fixed point, the second confirms it
        assert_eq!(out.iterations, 2);
        assert_eq!(out.investments.0, DVector::from_vec(vec![0.5, 0.5, 0.1875]));
    }

    #[test]
    fn iteration_two_node_from_zero() {
        let out = ne_best_response_iteration(
            &swap_net(),
            &PriceVector::uniform(2, 1.0),
            &InvestmentVector::zeros(2),
            1e-12,
            1000,
        )
        .unwrap();
        assert!(max_abs_diff(&out.investments.0, &DVector::from_element(2, 1.0 / 3.0)) < 1e-11);
        assert!(!out.clamped);
        assert!(out.investments.interior());
    }

    #[test]
    fn iteration_clamps_corner_and_warns_via_solve_subgame() {
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(2, 2), 2.0, 2.0, 0.5).unwrap();
        let p = PriceVector::from_vec(vec![1.0, 3.0]);
        let sol = solve_subgame(&net, &p).unwrap();
        assert!(sol.clamped);
        assert!(!sol.agrees);
        assert_eq!(sol.investments.0[1], 0.0);
        assert!(sol.closed_form.0[1] < 0.0);
    }

    #[test]
    fn iteration_budget_error_carries_last_iterate() {
        let err = ne_best_response_iteration(
            &swap_net(),
            &PriceVector::uniform(2, 1.0),
            &InvestmentVector::zeros(2),
            1e-15,
            3,
        )
        .unwrap_err();
        match err {
            Error::MaxIterations { iterations, last, residual } => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 2);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        assert!(ne_best_response_iteration(
            &swap_net(),
            &PriceVector::uniform(2, 1.0),
            &InvestmentVector::zeros(2),
            0.0,
            3
        )
        .is_err());
    }

    #[test]
    fn spectral_gate_rejects_explosive_network() {
        // 2 beta = 0.5 < row sum 1 and rho(Q^-1 G) = 2
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let net = ExternalityNetwork::homogeneous(g, 2.0, 0.25, 0.5).unwrap();
        assert!(matches!(
            ne_closed_form(&net, &PriceVector::uniform(2, 1.0)),
            Err(Error::SpectralCondition { .. })
        ));
    }

    #[test]
    fn first_order_residual_vanishes_at_equilibrium() {
        let net = swap_net();
        let p = PriceVector::uniform(2, 1.0);
        let x = ne_closed_form(&net, &p).unwrap();
        assert!(first_order_residual(&net, &x.0, &p) < 1e-14);
    }
}
