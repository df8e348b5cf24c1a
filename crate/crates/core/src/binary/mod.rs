//! Two-price (regular/discount) vendor pricing.
//!
//! Prices are restricted to `p_i in {p_reg, p_dsc}` and encoded as
//! `p = delta y + p_T 1` with `y in {-1, +1}^n`, `p_T = (p_reg + p_dsc)/2` and
//! `delta = p_reg - p_T`. The vendor's profit
//! `(delta y + c' 1)^T A (alpha' - delta y)` with `A = (Q - G)^{-1}`,
//! `alpha' = alpha - p_T 1`, `c' = p_T - c` is a binary quadratic program; it is
//! solved exactly for small `n` and otherwise by an SDP relaxation followed by
//! random-hyperplane rounding.

mod rounding;
mod sdp;

pub use rounding::{expected_rounded_value, round_hyperplane, round_with_normal, RoundingOutcome};
pub use sdp::{solve_sdp_relaxation, solve_sdp_with, SdpOptions, SdpResiduals, SdpSolution};

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::equilibrium::{ensure_spectral_condition, ne_closed_form, PriceVector};
use crate::error::{Error, Result};
use crate::linalg::Factorized;
use crate::monopoly::{optimal_uniform_price, PricingOutcome, PricingScenario};
use crate::network::ExternalityNetwork;

/// Largest `n` accepted by the exhaustive search.
pub const BRUTE_FORCE_CAP: usize = 22;
pub const DEFAULT_DEVIATION: f64 = 0.15;
/// Goemans–Williamson rounding constant.
pub const GW_FACTOR: f64 = 0.878;

/// Assignment of `-1` (discount) or `+1` (regular) per consumer. Ordered
/// lexicographically with `-1 < +1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignVector(pub Vec<i8>);

impl SignVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&s| s as f64))
    }

    /// Indices priced at the discount.
    pub fn discounted(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] < 0).collect()
    }
}

/// The profit `(delta y + c' 1)^T (A (alpha' - delta y) + e)` as a function of
/// the sign vector. `e` is an exogenous investment offset, zero for a
/// monopolist and the rival-induced term in a duopoly best response.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryObjective {
    response: DMatrix<f64>,
    alpha_prime: DVector<f64>,
    offset: DVector<f64>,
    c_prime: f64,
    delta: f64,
    p_t: f64,
}

impl BinaryObjective {
    /// `response` is the map `A` from `alpha - p` to investments.
    pub fn new(
        response: DMatrix<f64>,
        alpha: &DVector<f64>,
        offset: DVector<f64>,
        cost: f64,
        p_reg: f64,
        p_dsc: f64,
    ) -> Result<Self> {
        if !(p_reg.is_finite() && p_dsc.is_finite()) || p_dsc < 0.0 || p_reg < p_dsc {
            return Err(Error::InvalidArgument(format!(
                "need p_reg >= p_dsc >= 0, got p_reg = {p_reg}, p_dsc = {p_dsc}"
            )));
        }
        let n = alpha.len();
        if response.nrows() != n || response.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "response matrix",
                expected: n,
                found: response.nrows(),
            });
        }
        if offset.len() != n {
            return Err(Error::DimensionMismatch {
                what: "investment offset",
                expected: n,
                found: offset.len(),
            });
        }
        let p_t = (p_reg + p_dsc) / 2.0;
        Ok(Self {
            response,
            alpha_prime: alpha.map(|a| a - p_t),
            offset,
            c_prime: p_t - cost,
            delta: p_reg - p_t,
            p_t,
        })
    }

    pub fn n(&self) -> usize {
        self.alpha_prime.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn c_prime(&self) -> f64 {
        self.c_prime
    }

    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    pub fn response(&self) -> &DMatrix<f64> {
        &self.response
    }

    pub fn alpha_prime(&self) -> &DVector<f64> {
        &self.alpha_prime
    }

    pub fn prices(&self, y: &SignVector) -> PriceVector {
        PriceVector(y.as_f64() * self.delta + DVector::from_element(y.len(), self.p_t))
    }

    /// Direct evaluation of the profit at `y`.
    pub fn value(&self, y: &SignVector) -> f64 {
        let yv = y.as_f64();
        let margin = &yv * self.delta + DVector::from_element(yv.len(), self.c_prime);
        let demand = &self.response * (&self.alpha_prime - &yv * self.delta) + &self.offset;
        margin.dot(&demand)
    }

    /// `A alpha' + e`.
    fn base_demand(&self) -> DVector<f64> {
        &self.response * &self.alpha_prime + &self.offset
    }

    pub fn reformulate(&self) -> QuadraticForm {
        let n = self.n();
        let a = &self.response;
        let d2 = self.delta * self.delta;
        let mut qhat = (a + a.transpose()) * (-0.5 * d2);
        for i in 0..n {
            qhat[(i, i)] = 0.0;
        }
        let base = self.base_demand();
        let col_sums = a.transpose() * DVector::from_element(n, 1.0);
        let d = (&base - col_sums * self.c_prime) * (self.delta / 2.0);
        let z = self.c_prime * base.sum() - d2 * a.trace();
        QuadraticForm { qhat, d, z }
    }

    /// Exhaustive maximization over all `2^n` sign vectors in Gray-code order.
    pub fn brute_force(&self, cap: usize) -> Result<ExactOptimum> {
        let n = self.n();
        if n > cap {
            return Err(Error::TooLarge { n, cap });
        }
        if n == 0 {
            return Ok(ExactOptimum {
                y_star: SignVector(vec![]),
                w_opt: 0.0,
            });
        }
        let a = &self.response;
        let mut y = vec![-1i8; n];
        let refresh = |y: &[i8]| -> (DVector<f64>, DVector<f64>) {
            let yv = DVector::from_iterator(n, y.iter().map(|&s| s as f64));
            let margin = &yv * self.delta + DVector::from_element(n, self.c_prime);
            let demand = a * (&self.alpha_prime - &yv * self.delta) + &self.offset;
            (margin, demand)
        };
        let (mut margin, mut demand) = refresh(&y);
        let mut best_y = y.clone();
        let mut best = margin.dot(&demand);
        let total: u64 = 1 << n;
        for k in 1..total {
            let bit = k.trailing_zeros() as usize;
            let sign = y[bit] as f64;
            y[bit] = -y[bit];
            margin[bit] -= 2.0 * self.delta * sign;
            demand.axpy(2.0 * self.delta * sign, &a.column(bit), 1.0);
            if k % 4096 == 0 {
                (margin, demand) = refresh(&y);
            }
            let value = margin.dot(&demand);
            let tie_eps = 1e-12 * (1.0 + best.abs());
            if value > best + tie_eps || ((value - best).abs() <= tie_eps && y < best_y) {
                best = value;
                best_y.copy_from_slice(&y);
            }
        }
        let y_star = SignVector(best_y);
        let w_opt = self.value(&y_star);
        Ok(ExactOptimum { y_star, w_opt })
    }

    /// The additive constant `r` of the approximation guarantee
    /// `E[W_alg] + r > 0.878 (W_OPT + r)`:
    /// `r = delta^2 1^T A 1 + delta 1^T |A alpha' - c' A^T 1| - c' 1^T A alpha' - 2 delta^2 tr(A)`
    /// with the absolute value taken elementwise.
    pub fn guarantee_constant(&self) -> f64 {
        let n = self.n();
        let a = &self.response;
        let ones = DVector::from_element(n, 1.0);
        let d2 = self.delta * self.delta;
        let base = self.base_demand();
        let col_sums = a.transpose() * &ones;
        let spread: f64 = (&base - col_sums * self.c_prime).abs().sum();
        d2 * ones.dot(&(a * &ones)) + self.delta * spread - self.c_prime * base.sum()
            - 2.0 * d2 * a.trace()
    }
}

/// `y^T Qhat y + 2 d^T y + z` with symmetric, zero-diagonal `Qhat`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub qhat: DMatrix<f64>,
    pub d: DVector<f64>,
    pub z: f64,
}

impl QuadraticForm {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn objective(&self, y: &SignVector) -> f64 {
        let yv = y.as_f64();
        yv.dot(&(&self.qhat * &yv)) + 2.0 * self.d.dot(&yv) + self.z
    }

    /// `Q' = [[Qhat, d], [d^T, 0]]`, so `[y; 1]^T Q' [y; 1] + z` is the objective.
    pub fn homogenized(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut q = DMatrix::zeros(n + 1, n + 1);
        q.view_mut((0, 0), (n, n)).copy_from(&self.qhat);
        for i in 0..n {
            q[(i, n)] = self.d[i];
            q[(n, i)] = self.d[i];
        }
        q
    }

    /// `sum_ij |Q'_ij| - z`, the shift under which the rounding guarantee holds
    /// without any sign assumption on the objective.
    pub fn guarantee_shift(&self) -> f64 {
        self.homogenized().abs().sum() - self.z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactOptimum {
    pub y_star: SignVector,
    pub w_opt: f64,
}

/// Two-price problem on a network, with `A = (Q - G)^{-1}` precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPricingProblem {
    net: ExternalityNetwork,
    p_reg: f64,
    p_dsc: f64,
    objective: BinaryObjective,
}

impl BinaryPricingProblem {
    pub fn new(net: ExternalityNetwork, p_reg: f64, p_dsc: f64) -> Result<Self> {
        ensure_spectral_condition(&net)?;
        let n = net.n();
        let a = Factorized::new(&net.response_matrix(), "binary pricing")?
            .solve_matrix(&DMatrix::identity(n, n))?;
        let objective = BinaryObjective::new(
            a,
            net.alpha(),
            DVector::zeros(n),
            net.cost(),
            p_reg,
            p_dsc,
        )?;
        if objective.c_prime < objective.delta {
            warn!(
                "margin condition c' >= delta fails (c' = {}, delta = {})",
                objective.c_prime, objective.delta
            );
        }
        Ok(Self {
            net,
            p_reg,
            p_dsc,
            objective,
        })
    }

    /// Prices `(1 +- deviation) p_u` around the optimal uniform price `p_u`.
    pub fn around_uniform(net: ExternalityNetwork, deviation: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&deviation) {
            return Err(Error::InvalidArgument(format!(
                "deviation {deviation} must lie in [0, 1)"
            )));
        }
        let p_u = optimal_uniform_price(&net)?.prices.0[0];
        Self::new(net, p_u * (1.0 + deviation), p_u * (1.0 - deviation))
    }

    pub fn net(&self) -> &ExternalityNetwork {
        &self.net
    }

    pub fn p_reg(&self) -> f64 {
        self.p_reg
    }

    pub fn p_dsc(&self) -> f64 {
        self.p_dsc
    }

    pub fn objective(&self) -> &BinaryObjective {
        &self.objective
    }

    /// `c' >= delta`.
    pub fn margin_condition_holds(&self) -> bool {
        self.objective.c_prime >= self.objective.delta
    }
}

pub fn reformulate(prob: &BinaryPricingProblem) -> QuadraticForm {
    prob.objective.reformulate()
}

pub fn brute_force_opt(prob: &BinaryPricingProblem) -> Result<ExactOptimum> {
    prob.objective.brute_force(BRUTE_FORCE_CAP)
}

pub fn compute_r(prob: &BinaryPricingProblem) -> f64 {
    prob.objective.guarantee_constant()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactComparison {
    pub w_opt: f64,
    pub y_star: SignVector,
    /// Achieved profit over the optimum.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryOutcome {
    pub outcome: PricingOutcome,
    pub y: SignVector,
    pub rounding: RoundingOutcome,
    pub sdp_objective: f64,
    pub exact: Option<ExactComparison>,
}

/// Relaxes and rounds an objective; returns the rounding summary and the
/// relaxation value.
pub fn solve_binary_objective(
    obj: &BinaryObjective,
    trials: usize,
    rng_seed: u64,
) -> Result<(RoundingOutcome, f64)> {
    let qf = obj.reformulate();
    let sdp = solve_sdp_relaxation(&qf, sdp::DEFAULT_TOL)?;
    let rounding = round_hyperplane(&sdp, &qf, trials, rng_seed)?;
    Ok((rounding, sdp.sdp_objective))
}

/// Reformulate, relax, round, and decode the best sign vector into prices.
pub fn binary_pricing_pipeline(
    prob: &BinaryPricingProblem,
    trials: usize,
    rng_seed: u64,
) -> Result<BinaryOutcome> {
    let (rounding, sdp_objective) = solve_binary_objective(&prob.objective, trials, rng_seed)?;
    let y = rounding.y_best.clone();
    let prices = prob.objective.prices(&y);
    let investments = ne_closed_form(&prob.net, &prices)?;
    let outcome = PricingOutcome::new(
        prob.net.cost(),
        prices,
        investments,
        PricingScenario::Binary,
    );
    let exact = if prob.net.n() <= BRUTE_FORCE_CAP {
        let opt = brute_force_opt(prob)?;
        Some(ExactComparison {
            ratio: outcome.profit / opt.w_opt,
            w_opt: opt.w_opt,
            y_star: opt.y_star,
        })
    } else {
        None
    };
    Ok(BinaryOutcome {
        outcome,
        y,
        rounding,
        sdp_objective,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap_problem(p_reg: f64, p_dsc: f64) -> BinaryPricingProblem {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let net = ExternalityNetwork::homogeneous(g, 2.0, 2.0, 0.5).unwrap();
        BinaryPricingProblem::new(net, p_reg, p_dsc).unwrap()
    }

    fn all_signs(n: usize) -> impl Iterator<Item = SignVector> {
        (0..(1u32 << n)).map(move |mask| {
            SignVector((0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect())
        })
    }

    #[test]
    fn no_spread_gives_flat_objective() {
        let prob = swap_problem(1.2, 1.2);
        let qf = reformulate(&prob);
        assert_eq!(qf.qhat.amax(), 0.0);
        assert_eq!(qf.d.amax(), 0.0);
        let values: Vec<f64> = all_signs(2).map(|y| qf.objective(&y)).collect();
        assert!(values.iter().all(|v| (v - values[0]).abs() < 1e-15));
        let opt = brute_force_opt(&prob).unwrap();
        assert_eq!(opt.y_star, SignVector(vec![-1, -1]));
    }

    #[test]
    fn two_node_corners_match_direct_objective() {
        let prob = swap_problem(1.4, 1.0);
        let qf = reformulate(&prob);
        for y in all_signs(2) {
            let direct = {
                let p = prob.objective().prices(&y);
                let x = ne_closed_form(prob.net(), &p).unwrap();
                p.0.iter().zip(x.0.iter()).map(|(p, x)| (p - 0.5) * x).sum::<f64>()
            };
            assert!((qf.objective(&y) - direct).abs() < 1e-14);
            assert!((prob.objective().value(&y) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn single_consumer_picks_better_price() {
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(1, 1), 2.0, 2.0, 0.5).unwrap();
        // profit (p - 0.5)(2 - p)/4 peaks at 1.25; 1.2 beats 1.5
        let prob = BinaryPricingProblem::new(net, 1.5, 1.2).unwrap();
        let opt = brute_force_opt(&prob).unwrap();
        assert_eq!(opt.y_star, SignVector(vec![-1]));
        assert!((opt.w_opt - 0.7 * 0.8 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn brute_force_cap_is_enforced() {
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(23, 23), 2.0, 2.0, 0.5).unwrap();
        let prob = BinaryPricingProblem::new(net, 1.4, 1.1).unwrap();
        assert!(matches!(
            brute_force_opt(&prob),
            Err(Error::TooLarge { n: 23, cap: 22 })
        ));
    }

    #[test]
    fn r_without_spread() {
        let prob = swap_problem(1.25, 1.25);
        let a = prob.objective().response();
        let expected = -prob.objective().c_prime() * (a * prob.objective().alpha_prime()).sum();
        assert!((compute_r(&prob) - expected).abs() < 1e-15);
    }

    #[test]
    fn r_for_diagonal_response() {
        // A = I/4, alpha' = 0.75, c' = 0.75, delta = 0.25
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(3, 3), 2.0, 2.0, 0.5).unwrap();
        let prob = BinaryPricingProblem::new(net, 1.5, 1.0).unwrap();
        let (d, cp, ap) = (0.25, 0.75, 0.75);
        let expected = d * d * 0.75 + d * 3.0 * ((ap - cp) / 4.0f64).abs() - cp * 3.0 * ap / 4.0
            - 2.0 * d * d * 0.75;
        assert!((compute_r(&prob) - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_price_pair_rejected() {
        let g = DMatrix::zeros(2, 2);
        let net = ExternalityNetwork::homogeneous(g, 2.0, 2.0, 0.5).unwrap();
        assert!(BinaryPricingProblem::new(net.clone(), 1.0, 1.2).is_err());
        assert!(BinaryPricingProblem::new(net, 1.0, -0.1).is_err());
    }

    #[test]
    fn margin_condition_flag() {
        assert!(swap_problem(1.4, 1.0).margin_condition_holds());
        // p_T = 0.6, c' = 0.1 < delta = 0.5
        assert!(!swap_problem(1.1, 0.1).margin_condition_holds());
    }

    #[test]
    fn pipeline_without_spread_matches_uniform_profit() {
        let prob = swap_problem(1.3, 1.3);
        let out = binary_pricing_pipeline(&prob, 20, 1).unwrap();
        let uniform = crate::monopoly::profit_at(prob.net(), &PriceVector::uniform(2, 1.3)).unwrap();
        assert!((out.outcome.profit - uniform).abs() < 1e-14);
        assert_eq!(out.outcome.scenario, PricingScenario::Binary);
    }
}
