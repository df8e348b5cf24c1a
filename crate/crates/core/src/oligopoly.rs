//! Price competition between vendors that serve disjoint client sets on one
//! externality network.
//!
//! Each round every vendor best-responds to its rivals' latest prices, the
//! consumers' investment game is re-solved on the full network, and the run
//! stops once no price moves by more than the tolerance.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binary::{
    solve_binary_objective, BinaryObjective, BinaryPricingProblem, DEFAULT_DEVIATION,
};
use crate::equilibrium::{ensure_spectral_condition, InvestmentVector, PriceVector};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_above, Factorized};
use crate::monopoly::{
    optimal_differentiated_prices, optimal_uniform_price, PricingScenario, PD_TOL,
};
use crate::network::ExternalityNetwork;

pub const DEFAULT_MARKET_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ROUNDS: usize = 25;
pub const DEFAULT_OSCILLATION_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    RandomEqual,
    Alternating,
}

/// Splits `n` consumers between `n_svs` vendors; entry `i` is the vendor
/// serving consumer `i`. Sizes differ by at most one.
pub fn partition_consumers(
    n: usize,
    n_svs: usize,
    scheme: PartitionScheme,
    seed: u64,
) -> Result<Vec<usize>> {
    if n_svs == 0 || n < n_svs {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} consumers between {n_svs} vendors"
        )));
    }
    let mut assignment: Vec<usize> = (0..n).map(|i| i % n_svs).collect();
    if scheme == PartitionScheme::RandomEqual {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        assignment.shuffle(&mut rng);
    }
    Ok(assignment)
}

/// How a vendor models the network when best-responding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalityView {
    /// Full `G`: the vendor anticipates how rival clients' investments react
    /// to its own prices.
    Full,
    /// Only its clients' block of `G`; rival investments enter as a fixed
    /// shift of the clients' base utility.
    ClientBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSchedule {
    /// All vendors respond to the previous round's prices.
    Simultaneous,
    /// Vendors respond in turn, each seeing the updates made earlier in the round.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinarySettings {
    /// `(p_reg, p_dsc)`; defaults to a spread around the network's optimal uniform price.
    pub prices: Option<(f64, f64)>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BinarySettings {
    fn default() -> Self {
        Self {
            prices: None,
            trials: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketOptions {
    pub scenario: PricingScenario,
    pub tol: f64,
    pub max_rounds: usize,
    pub schedule: UpdateSchedule,
    pub view: ExternalityView,
    pub oscillation_window: usize,
    pub binary: BinarySettings,
}

impl Default for MarketOptions {
    fn default() -> Self {
        Self {
            scenario: PricingScenario::Differentiated,
            tol: DEFAULT_MARKET_TOL,
            max_rounds: DEFAULT_MAX_ROUNDS,
            schedule: UpdateSchedule::Simultaneous,
            view: ExternalityView::Full,
            oscillation_window: DEFAULT_OSCILLATION_WINDOW,
            binary: BinarySettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub round: usize,
    /// Per vendor, prices over its own clients in increasing consumer order.
    pub prices: Vec<PriceVector>,
    pub investments: InvestmentVector,
    pub profits: Vec<f64>,
    /// Per vendor, profit at the externality-blind price `(alpha_i + c)/2`
    /// over its current profit, rivals held at their current prices.
    pub profit_ratios: Vec<f64>,
    /// Max absolute price change from the previous round; infinite in round 0.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxRounds,
    Oscillation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketRun {
    pub assignment: Vec<usize>,
    pub trajectory: Vec<MarketState>,
    pub converged: bool,
    pub final_gap: f64,
    pub stop: StopReason,
}

impl MarketRun {
    pub fn last(&self) -> &MarketState {
        self.trajectory.last().expect("trajectory is nonempty")
    }

    /// Number of best-response rounds after the initial pricing.
    pub fn rounds(&self) -> usize {
        self.last().round
    }
}

struct VendorBlock {
    clients: Vec<usize>,
    /// Rows of `A = (Q - G)^{-1}` for the clients.
    a_rows: DMatrix<f64>,
    /// `A_KK`.
    a_kk: DMatrix<f64>,
    /// Factor of `A_KK + A_KK^T`, present when positive definite.
    curvature: std::result::Result<Cholesky<f64, Dyn>, f64>,
}

/// A network with a fixed client assignment and precomputed response blocks.
pub struct Market<'a> {
    net: &'a ExternalityNetwork,
    assignment: Vec<usize>,
    blocks: Vec<VendorBlock>,
    a: DMatrix<f64>,
    options: MarketOptions,
    binary_prices: (f64, f64),
}

impl<'a> Market<'a> {
    pub fn new(
        net: &'a ExternalityNetwork,
        assignment: Vec<usize>,
        options: MarketOptions,
    ) -> Result<Self> {
        let n = net.n();
        if assignment.len() != n {
            return Err(Error::DimensionMismatch {
                what: "assignment",
                expected: n,
                found: assignment.len(),
            });
        }
        if !(options.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                options.tol
            )));
        }
        let n_svs = assignment.iter().max().map_or(0, |m| m + 1);
        let mut clients = vec![Vec::new(); n_svs];
        for (i, &k) in assignment.iter().enumerate() {
            clients[k].push(i);
        }
        if clients.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidArgument(
                "every vendor needs at least one client".into(),
            ));
        }
        ensure_spectral_condition(net)?;
        let a = Factorized::new(&net.response_matrix(), "market response")?
            .solve_matrix(&DMatrix::identity(n, n))?;
        let blocks = clients
            .into_iter()
            .map(|clients| {
                let a_rows = a.select_rows(&clients);
                let a_kk = a_rows.select_columns(&clients);
                let curvature = cholesky_above(&(&a_kk + a_kk.transpose()), PD_TOL);
                VendorBlock {
                    clients,
                    a_rows,
                    a_kk,
                    curvature,
                }
            })
            .collect();
        let binary_prices = match options.binary.prices {
            Some(pair) => pair,
            None if options.scenario == PricingScenario::Binary => {
                let p_u = optimal_uniform_price(net)?.prices.0[0];
                (p_u * (1.0 + DEFAULT_DEVIATION), p_u * (1.0 - DEFAULT_DEVIATION))
            }
            None => (0.0, 0.0),
        };
        Ok(Self {
            net,
            assignment,
            blocks,
            a,
            options,
            binary_prices,
        })
    }

    pub fn n_svs(&self) -> usize {
        self.blocks.len()
    }

    pub fn clients(&self, sv: usize) -> &[usize] {
        &self.blocks[sv].clients
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn options(&self) -> &MarketOptions {
        &self.options
    }

    /// Investments `A (alpha - p)` for a full price vector.
    pub fn investments(&self, prices: &PriceVector) -> InvestmentVector {
        InvestmentVector(&self.a * (self.net.alpha() - &prices.0))
    }

    fn check_sv(&self, sv: usize) -> Result<()> {
        if sv >= self.n_svs() {
            return Err(Error::InvalidArgument(format!(
                "vendor {sv} out of range for {} vendors",
                self.n_svs()
            )));
        }
        Ok(())
    }

    /// Client demand at zero own prices: `A_K. (alpha - p~)` with `p~ = p` off
    /// the block and `p~_K = 0`.
    fn base_demand(&self, sv: usize, prices: &PriceVector) -> DVector<f64> {
        let block = &self.blocks[sv];
        let mut margin = self.net.alpha() - &prices.0;
        for &i in &block.clients {
            margin[i] = self.net.alpha()[i];
        }
        &block.a_rows * margin
    }

    /// Profit of vendor `sv` if it charges `own` while everyone else keeps `prices`.
    pub fn profit_with(&self, sv: usize, own: &DVector<f64>, prices: &PriceVector) -> Result<f64> {
        self.check_sv(sv)?;
        let block = &self.blocks[sv];
        if own.len() != block.clients.len() {
            return Err(Error::DimensionMismatch {
                what: "vendor prices",
                expected: block.clients.len(),
                found: own.len(),
            });
        }
        let demand = self.base_demand(sv, prices) - &block.a_kk * own;
        let c = self.net.cost();
        Ok(own.iter().zip(demand.iter()).map(|(p, x)| (p - c) * x).sum())
    }

    pub fn own_prices(&self, sv: usize, prices: &PriceVector) -> DVector<f64> {
        DVector::from_iterator(
            self.blocks[sv].clients.len(),
            self.blocks[sv].clients.iter().map(|&i| prices.0[i]),
        )
    }

    /// Monopoly pricing of the client sub-network with base utilities `alpha_k`.
    fn block_monopoly(&self, sv: usize, alpha_k: DVector<f64>) -> Result<DVector<f64>> {
        let sub = self.net.restrict(&self.blocks[sv].clients)?.with_alpha(alpha_k)?;
        Ok(match self.options.scenario {
            PricingScenario::Differentiated => optimal_differentiated_prices(&sub)?.prices.0,
            PricingScenario::Uniform => optimal_uniform_price(&sub)?.prices.0,
            PricingScenario::Binary => {
                let (p_reg, p_dsc) = self.binary_prices;
                let prob = BinaryPricingProblem::new(sub, p_reg, p_dsc)?;
                self.binary_response(prob.objective().clone())?
            }
        })
    }

    fn binary_response(&self, obj: BinaryObjective) -> Result<DVector<f64>> {
        let settings = &self.options.binary;
        let (rounding, _) = solve_binary_objective(&obj, settings.trials, settings.seed)?;
        Ok(obj.prices(&rounding.y_best).0)
    }

    /// Vendor `sv`'s optimal prices over its clients given everyone's current
    /// `prices` (full length; only rival entries matter).
    pub fn best_response(&self, sv: usize, prices: &PriceVector) -> Result<PriceVector> {
        self.check_sv(sv)?;
        if prices.len() != self.net.n() {
            return Err(Error::DimensionMismatch {
                what: "price vector",
                expected: self.net.n(),
                found: prices.len(),
            });
        }
        let block = &self.blocks[sv];
        let c = self.net.cost();
        if self.options.view == ExternalityView::ClientBlock {
            let x = self.investments(prices);
            let g = self.net.g();
            let alpha_k = DVector::from_iterator(
                block.clients.len(),
                block.clients.iter().map(|&i| {
                    let spill: f64 = (0..self.net.n())
                        .filter(|&j| self.assignment[j] != sv)
                        .map(|j| g[(i, j)] * x.0[j])
                        .sum();
                    self.net.alpha()[i] + spill
                }),
            );
            return self.block_monopoly(sv, alpha_k).map(PriceVector);
        }
        let b = self.base_demand(sv, prices);
        let own = match self.options.scenario {
            PricingScenario::Differentiated => {
                let chol = block.curvature.as_ref().map_err(|&min_eigenvalue| {
                    Error::NotPositiveDefinite { min_eigenvalue }
                })?;
                let ones = DVector::from_element(block.clients.len(), 1.0);
                chol.solve(&(&b + block.a_kk.transpose() * ones * c))
            }
            PricingScenario::Uniform => {
                let s = block.a_kk.sum();
                if s <= 0.0 {
                    return Err(Error::Singular {
                        context: "uniform vendor response",
                    });
                }
                let p = (b.sum() + c * s) / (2.0 * s);
                DVector::from_element(block.clients.len(), p)
            }
            PricingScenario::Binary => {
                let (p_reg, p_dsc) = self.binary_prices;
                let alpha_k = DVector::from_iterator(
                    block.clients.len(),
                    block.clients.iter().map(|&i| self.net.alpha()[i]),
                );
                let offset = &b - &block.a_kk * &alpha_k;
                let obj = BinaryObjective::new(block.a_kk.clone(), &alpha_k, offset, c, p_reg, p_dsc)?;
                self.binary_response(obj)?
            }
        };
        Ok(PriceVector(own))
    }

    /// Assembles per-vendor prices into one vector over all consumers.
    pub fn scatter(&self, per_sv: &[PriceVector]) -> PriceVector {
        let mut p = DVector::zeros(self.net.n());
        for (block, own) in self.blocks.iter().zip(per_sv) {
            for (&i, &v) in block.clients.iter().zip(own.0.iter()) {
                p[i] = v;
            }
        }
        PriceVector(p)
    }

    fn state(&self, round: usize, per_sv: Vec<PriceVector>, gap: f64) -> Result<MarketState> {
        let full = self.scatter(&per_sv);
        let investments = self.investments(&full);
        let mut profits = Vec::with_capacity(self.n_svs());
        let mut ratios = Vec::with_capacity(self.n_svs());
        for (sv, block) in self.blocks.iter().enumerate() {
            let p1 = self.profit_with(sv, &per_sv[sv].0, &full)?;
            let blind = DVector::from_iterator(
                block.clients.len(),
                block
                    .clients
                    .iter()
                    .map(|&i| (self.net.alpha()[i] + self.net.cost()) / 2.0),
            );
            let p0 = self.profit_with(sv, &blind, &full)?;
            profits.push(p1);
            ratios.push(p0 / p1);
        }
        Ok(MarketState {
            round,
            prices: per_sv,
            investments,
            profits,
            profit_ratios: ratios,
            gap,
        })
    }

    /// Round 0 prices each vendor as a monopolist on its own clients, then
    /// repeated best response until the largest price change drops below
    /// the tolerance.
    pub fn run(&self) -> Result<MarketRun> {
        let opts = &self.options;
        let initial = (0..self.n_svs())
            .map(|sv| {
                let alpha_k = DVector::from_iterator(
                    self.blocks[sv].clients.len(),
                    self.blocks[sv].clients.iter().map(|&i| self.net.alpha()[i]),
                );
                self.block_monopoly(sv, alpha_k).map(PriceVector)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut trajectory = vec![self.state(0, initial, f64::INFINITY)?];
        let mut stop = StopReason::MaxRounds;
        for round in 1..=opts.max_rounds {
            let prev = &trajectory.last().expect("nonempty").prices;
            let mut current = self.scatter(prev);
            let mut next = Vec::with_capacity(self.n_svs());
            let snapshot = current.clone();
            for sv in 0..self.n_svs() {
                let seen = match opts.schedule {
                    UpdateSchedule::Simultaneous => &snapshot,
                    UpdateSchedule::Sequential => &current,
                };
                let own = self.best_response(sv, seen)?;
                if opts.schedule == UpdateSchedule::Sequential {
                    for (&i, &v) in self.blocks[sv].clients.iter().zip(own.0.iter()) {
                        current.0[i] = v;
                    }
                }
                next.push(own);
            }
            let gap = prev
                .iter()
                .zip(&next)
                .flat_map(|(a, b)| a.0.iter().zip(b.0.iter()).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            debug!("round {round}: gap {gap:.3e}");
            trajectory.push(self.state(round, next, gap)?);
            if gap < opts.tol {
                stop = StopReason::Converged;
                break;
            }
            if self.oscillating(&trajectory) {
                stop = StopReason::Oscillation;
                break;
            }
        }
        let final_gap = trajectory.last().expect("nonempty").gap;
        Ok(MarketRun {
            assignment: self.assignment.clone(),
            trajectory,
            converged: stop == StopReason::Converged,
            final_gap,
            stop,
        })
    }

    /// The gap has not decreased over the last `oscillation_window` rounds.
    fn oscillating(&self, trajectory: &[MarketState]) -> bool {
        let w = self.options.oscillation_window;
        if w < 2 || trajectory.len() < w + 1 {
            return false;
        }
        let gaps: Vec<f64> = trajectory[trajectory.len() - w..].iter().map(|s| s.gap).collect();
        gaps.windows(2).all(|p| p[1] >= p[0])
    }
}

/// Best response of vendor `sv` against `prices`.
pub fn sv_best_response(market: &Market<'_>, prices: &PriceVector, sv: usize) -> Result<PriceVector> {
    market.best_response(sv, prices)
}

pub fn run_market(
    net: &ExternalityNetwork,
    assignment: Vec<usize>,
    options: MarketOptions,
) -> Result<MarketRun> {
    Market::new(net, assignment, options)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monopoly::profit_at;
    use crate::network::{generate_pa, TopologyConfig};

    fn ring(n: usize, w: f64, beta: f64) -> ExternalityNetwork {
        let g = DMatrix::from_fn(n, n, |i, j| {
            if (i + 1) % n == j || (j + 1) % n == i {
                w
            } else {
                0.0
            }
        });
        ExternalityNetwork::homogeneous(g, 2.0, beta, 0.5).unwrap()
    }

    #[test]
    fn alternating_partition() {
        assert_eq!(
            partition_consumers(4, 2, PartitionScheme::Alternating, 0).unwrap(),
            vec![0, 1, 0, 1]
        );
    }

    #[test]
    fn random_partition_is_balanced_and_seeded() {
        let a = partition_consumers(501, 2, PartitionScheme::RandomEqual, 9).unwrap();
        let ones = a.iter().filter(|&&k| k == 1).count();
        assert!((501 - 2 * ones as i64).abs() <= 1);
        assert_eq!(a, partition_consumers(501, 2, PartitionScheme::RandomEqual, 9).unwrap());
        assert_ne!(a, partition_consumers(501, 2, PartitionScheme::RandomEqual, 10).unwrap());
    }

    #[test]
    fn too_few_consumers() {
        assert!(partition_consumers(1, 2, PartitionScheme::Alternating, 0).is_err());
    }

    #[test]
    fn no_externalities_converge_in_one_round() {
        let net = ExternalityNetwork::homogeneous(DMatrix::zeros(6, 6), 2.0, 2.0, 0.5).unwrap();
        for scenario in [PricingScenario::Differentiated, PricingScenario::Uniform] {
            let assignment = partition_consumers(6, 2, PartitionScheme::Alternating, 0).unwrap();
            let run = run_market(
                &net,
                assignment,
                MarketOptions {
                    scenario,
                    ..MarketOptions::default()
                },
            )
            .unwrap();
            assert!(run.converged);
            assert_eq!(run.rounds(), 1);
            for p in &run.last().prices {
                assert!(p.0.iter().all(|v| (v - 1.25).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn symmetric_ring_gives_identical_vendors() {
        let net = ring(8, 0.5, 2.0);
        let assignment = partition_consumers(8, 2, PartitionScheme::Alternating, 0).unwrap();
        let run = run_market(&net, assignment, MarketOptions::default()).unwrap();
        assert!(run.converged);
        for s in &run.trajectory {
            assert!((s.profits[0] - s.profits[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_symmetric_duopoly() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let net = ExternalityNetwork::homogeneous(g, 2.0, 2.0, 0.5).unwrap();
        let market = Market::new(&net, vec![0, 1], MarketOptions::default()).unwrap();
        let p = PriceVector::uniform(2, 1.0);
        let a = market.best_response(0, &p).unwrap();
        let b = market.best_response(1, &p).unwrap();
        assert!((a.0[0] - b.0[0]).abs() < 1e-14);
    }

    #[test]
    fn converged_state_admits_no_profitable_deviation() {
        let net = generate_pa(&TopologyConfig::pa(60, 0.5, 3.0, 5)).unwrap();
        let assignment = partition_consumers(60, 2, PartitionScheme::RandomEqual, 1).unwrap();
        let market = Market::new(&net, assignment, MarketOptions::default()).unwrap();
        let run = market.run().unwrap();
        assert!(run.converged, "{:?}", run.stop);
        let last = run.last();
        let full = market.scatter(&last.prices);
        for sv in 0..2 {
            let again = market.best_response(sv, &full).unwrap();
            let gain = market.profit_with(sv, &again.0, &full).unwrap() - last.profits[sv];
            assert!(gain < 1e-6);
        }
        // vendor profits add up to the profit of the combined price vector
        let total = profit_at(&net, &full).unwrap();
        assert!((total - last.profits.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn sequential_schedule_also_converges() {
        let net = generate_pa(&TopologyConfig::pa(40, 0.3, 2.5, 2)).unwrap();
        let assignment = partition_consumers(40, 2, PartitionScheme::RandomEqual, 2).unwrap();
        let run = run_market(
            &net,
            assignment,
            MarketOptions {
                schedule: UpdateSchedule::Sequential,
                ..MarketOptions::default()
            },
        )
        .unwrap();
        assert!(run.converged);
    }

    #[test]
    fn client_block_view_runs() {
        let net = generate_pa(&TopologyConfig::pa(40, 0.3, 2.5, 2)).unwrap();
        let assignment = partition_consumers(40, 2, PartitionScheme::RandomEqual, 2).unwrap();
        let run = run_market(
            &net,
            assignment,
            MarketOptions {
                view: ExternalityView::ClientBlock,
                ..MarketOptions::default()
            },
        )
        .unwrap();
        assert!(run.converged);
    }

    #[test]
    fn binary_duopoly_uses_two_prices() {
        let net = ring(10, 0.5, 2.0);
        let assignment = partition_consumers(10, 2, PartitionScheme::Alternating, 0).unwrap();
        let run = run_market(
            &net,
            assignment,
            MarketOptions {
                scenario: PricingScenario::Binary,
                binary: BinarySettings {
                    prices: Some((1.5, 1.1)),
                    trials: 50,
                    seed: 3,
                },
                ..MarketOptions::default()
            },
        )
        .unwrap();
        for s in &run.trajectory {
            for p in &s.prices {
                assert!(p.0.iter().all(|&v| (v - 1.5).abs() < 1e-12 || (v - 1.1).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let net = ring(4, 0.5, 2.0);
        let opts = MarketOptions {
            tol: 0.0,
            ..MarketOptions::default()
        };
        assert!(Market::new(&net, vec![0, 1, 0, 1], opts).is_err());
    }
}
