//! First-stage pricing by a monopolist vendor.
//!
//! With `R = Q - G` the subgame equilibrium is `x = R^{-1}(alpha - p)` and the
//! vendor's profit is `(p - c 1)^T x`. Writing `v = (alpha - c 1)/2` and
//! `H = (R + R^T)/2 = Q - G'`, the profit as a function of the induced
//! investments is `2 v^T x - x^T H x`, maximized at `x = H^{-1} v`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    bonacich, ensure_spectral_condition, ne_closed_form, CentralityVector, InvestmentVector,
    PriceVector,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Factorized};
use crate::network::ExternalityNetwork;

/// Positive-definiteness threshold on the smallest eigenvalue of `Q - G'`.
pub const PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingScenario {
    Uniform,
    Binary,
    Differentiated,
}

impl std::fmt::Display for PricingScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PricingScenario::Uniform => "uniform",
            PricingScenario::Binary => "binary",
            PricingScenario::Differentiated => "differentiated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingOutcome {
    pub prices: PriceVector,
    pub investments: InvestmentVector,
    pub profit: f64,
    pub scenario: PricingScenario,
}

impl PricingOutcome {
    pub fn new(
        cost: f64,
        prices: PriceVector,
        investments: InvestmentVector,
        scenario: PricingScenario,
    ) -> Self {
        let profit = vendor_profit(cost, &prices, &investments);
        Self {
            prices,
            investments,
            profit,
            scenario,
        }
    }

    /// `(p - c 1)^T x` from the stored vectors.
    pub fn recomputed_profit(&self, cost: f64) -> f64 {
        vendor_profit(cost, &self.prices, &self.investments)
    }

    /// Per-consumer total spend `p_i x_i`.
    pub fn total_costs(&self) -> DVector<f64> {
        self.prices.0.component_mul(&self.investments.0)
    }
}

pub fn vendor_profit(cost: f64, prices: &PriceVector, investments: &InvestmentVector) -> f64 {
    prices
        .0
        .iter()
        .zip(investments.0.iter())
        .map(|(p, x)| (p - cost) * x)
        .sum()
}

/// Profit at prices `p` with consumers at their subgame equilibrium.
pub fn profit_at(net: &ExternalityNetwork, p: &PriceVector) -> Result<f64> {
    let x = ne_closed_form(net, p)?;
    Ok(vendor_profit(net.cost(), p, &x))
}

/// The three parts of the optimal differentiated price vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceDecomposition {
    /// `(alpha + c 1)/2`, independent of the topology.
    pub base: DVector<f64>,
    /// `G Q^{-1} B / 2`: charge for externalities a consumer receives.
    pub markup: DVector<f64>,
    /// `G^T Q^{-1} B / 2`: rebate for externalities a consumer provides.
    pub discount: DVector<f64>,
    /// `B = B(G', Q^{-1}, (alpha - c 1)/2)`.
    pub centrality: CentralityVector,
}

impl PriceDecomposition {
    pub fn prices(&self) -> PriceVector {
        PriceVector(&self.base + &self.markup - &self.discount)
    }
}

pub fn price_decomposition(net: &ExternalityNetwork) -> Result<PriceDecomposition> {
    ensure_spectral_condition(net)?;
    let q_inv = net.q_inv_diag()?;
    let w = net.half_margin();
    let centrality = bonacich(&net.symmetrized_g(), &q_inv, &w)?;
    // Q^{-1} B equals the optimal investment profile H^{-1} v
    let scaled = centrality.0.component_mul(&q_inv);
    let markup = (net.g() * &scaled) * 0.5;
    let discount = (net.g().transpose() * &scaled) * 0.5;
    let base = net.alpha().map(|a| (a + net.cost()) / 2.0);
    Ok(PriceDecomposition {
        base,
        markup,
        discount,
        centrality,
    })
}

pub fn optimal_differentiated_prices(net: &ExternalityNetwork) -> Result<PricingOutcome> {
    let prices = price_decomposition(net)?.prices();
    let investments = ne_closed_form(net, &prices)?;
    Ok(PricingOutcome::new(
        net.cost(),
        prices,
        investments,
        PricingScenario::Differentiated,
    ))
}

/// Scalar price `p = 1^T A (alpha + c 1) / (2 1^T A 1)` with `A = (Q - G)^{-1}`.
pub fn optimal_uniform_price(net: &ExternalityNetwork) -> Result<PricingOutcome> {
    ensure_spectral_condition(net)?;
    let n = net.n();
    let ones = DVector::from_element(n, 1.0);
    // u = A^T 1, so 1^T A b = u^T b
    let u = linalg::solve(&net.response_matrix().transpose(), &ones, "uniform price")?;
    let denom = u.sum();
    if !(denom.abs() > 1e-12 * n.max(1) as f64) {
        return Err(Error::Singular {
            context: "uniform price denominator",
        });
    }
    let numer = u.dot(&net.alpha().map(|a| a + net.cost()));
    let p = 0.5 * numer / denom;
    let prices = PriceVector::uniform(n, p);
    let investments = ne_closed_form(net, &prices)?;
    Ok(PricingOutcome::new(
        net.cost(),
        prices,
        investments,
        PricingScenario::Uniform,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitPair {
    /// Profit when pricing ignores externalities: `v^T (Q - G)^{-1} v`.
    pub p0: f64,
    /// Profit when pricing accounts for them: `v^T (Q - G')^{-1} v`.
    pub p1: f64,
}

impl ProfitPair {
    pub fn ratio(&self) -> f64 {
        self.p0 / self.p1
    }
}

/// Does not require `Q - G` to be positive definite, only invertible.
pub fn profits_p0_p1(net: &ExternalityNetwork) -> Result<ProfitPair> {
    let v = net.half_margin();
    let x0 = linalg::solve(&net.response_matrix(), &v, "P0 system")?;
    let x1 = linalg::solve(&net.symmetric_response(), &v, "P1 system")?;
    Ok(ProfitPair {
        p0: v.dot(&x0),
        p1: v.dot(&x1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// `1/2 + lambda(K)` with `K = (R R^{-T} + R^T R^{-1}) / 4`.
    TheoremStatement,
    /// `1/2 + 1/lambda(M)` with `M = (2I + R R^{-T} + R^T R^{-1}) / 4`.
    ProofForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitRatioBounds {
    pub lower: f64,
    pub upper: f64,
    pub ratio: f64,
    pub form: BoundForm,
}

impl ProfitRatioBounds {
    pub fn brackets(&self, tol: f64) -> bool {
        self.lower - tol <= self.ratio && self.ratio <= self.upper + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundComparison {
    pub profits: ProfitPair,
    pub theorem: ProfitRatioBounds,
    pub proof: ProfitRatioBounds,
    /// Extreme eigenvalues of `M = (2I + R R^{-T} + R^T R^{-1}) / 4`.
    pub m_min: f64,
    pub m_max: f64,
}

impl BoundComparison {
    pub fn ratio(&self) -> f64 {
        self.profits.ratio()
    }
}

/// P0/P1 with both eigenvalue bound forms. Requires `Q - G` positive definite.
///
/// `M = (2I + R R^{-T} + R^T R^{-1})/4` factors as `H S` with
/// `H = (R + R^T)/2` and `S = (R^{-1} + R^{-T})/2 = R^{-T} H R^{-1}`.
/// With `H = L L^T`, `L^{-1} M L = L^T S L = X^T H X` for `X = R^{-1} L`, which
/// is symmetric, so the spectrum of `M` comes from a symmetric eigensolve and
/// `P0/P1 = v^T S v / v^T H^{-1} v` lies between its extremes.
pub fn profit_ratio_bounds(net: &ExternalityNetwork) -> Result<BoundComparison> {
    let h = net.symmetric_response();
    let chol = linalg::cholesky_above(&h, PD_TOL)
        .map_err(|min_eigenvalue| Error::NotPositiveDefinite { min_eigenvalue })?;
    let r = Factorized::new(&net.response_matrix(), "profit ratio bounds")?;
    let l: DMatrix<f64> = chol.l();
    let x = r.solve_matrix(&l)?;
    let similar = linalg::symmetric_part(&(x.transpose() * &h * &x));
    let spectrum = linalg::symmetric_eigenvalues(&similar);
    let m_min = spectrum[0];
    let m_max = spectrum[spectrum.len() - 1];

    let v = net.half_margin();
    let x0 = r.solve(&v)?;
    let x1 = chol.solve(&v);
    let profits = ProfitPair {
        p0: v.dot(&x0),
        p1: v.dot(&x1),
    };
    let ratio = profits.ratio();
    let theorem = ProfitRatioBounds {
        lower: m_min,
        upper: m_max,
        ratio,
        form: BoundForm::TheoremStatement,
    };
    let proof = ProfitRatioBounds {
        lower: 0.5 + 1.0 / m_max,
        upper: 0.5 + 1.0 / m_min,
        ratio,
        form: BoundForm::ProofForm,
    };
    Ok(BoundComparison {
        profits,
        theorem,
        proof,
        m_min,
        m_max,
    })
}
