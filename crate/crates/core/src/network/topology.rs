//! Synthetic topologies: preferential-attachment graphs and Poisson branching trees.
//!
//! Both generators produce an undirected graph whose nodes are numbered in birth
//! order. Each undirected edge `(older, newer)` is turned into two directed
//! influence matrices:
//!
//! * `G1`: newer users influence older ones (row `older` gets weight on `newer`);
//! * `G2`: older users influence newer ones (row `newer` gets weight on `older`).
//!
//! Each is row-normalized (`h_ij = 1/d_i`) and the network uses the mix
//! `G(mu) = mu G1 + (1 - mu) G2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::ExternalityNetwork;
use crate::error::{Error, Result};

pub const DEFAULT_DEPTH_CAP: usize = 999_999;
pub const DEFAULT_TREE_RETRIES: usize = 10_000;

const DEFAULT_ALPHA: f64 = 2.0;
const DEFAULT_COST: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    PreferentialAttachment,
    PoissonTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    /// Target node count.
    pub n: usize,
    /// Influence value in `[0, 1]`.
    pub mu: f64,
    /// Scale-free tail exponent of the PA degree distribution.
    pub pa_exponent: f64,
    /// Undirected edges added by each newcomer in the PA process.
    pub edges_per_node: usize,
    /// Poisson branching parameter.
    pub lambda: f64,
    pub depth_cap: usize,
    /// Trees with fewer nodes are resampled (at least 2 is always enforced).
    pub min_nodes: usize,
    pub max_retries: usize,
    /// Utility curvature `beta_i` shared by all consumers. When unset, PA graphs
    /// use `pa_exponent` and trees use `|G| / 20`.
    pub utility_beta: Option<f64>,
    pub alpha: f64,
    pub cost: f64,
    pub seed: u64,
}

impl TopologyConfig {
    pub fn pa(n: usize, mu: f64, pa_exponent: f64, seed: u64) -> Self {
        Self {
            kind: TopologyKind::PreferentialAttachment,
            n,
            mu,
            pa_exponent,
            edges_per_node: 2,
            lambda: 1.0,
            depth_cap: DEFAULT_DEPTH_CAP,
            min_nodes: 2,
            max_retries: DEFAULT_TREE_RETRIES,
            utility_beta: None,
            alpha: DEFAULT_ALPHA,
            cost: DEFAULT_COST,
            seed,
        }
    }

    pub fn tree(n: usize, mu: f64, lambda: f64, seed: u64) -> Self {
        Self {
            kind: TopologyKind::PoissonTree,
            lambda,
            ..Self::pa(n, mu, 3.0, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidArgument(format!(
                "influence value mu = {} outside [0, 1]",
                self.mu
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n = {} must be >= 2", self.n)));
        }
        match self.kind {
            TopologyKind::PreferentialAttachment => {
                if self.n < 3 {
                    return Err(Error::Topology(format!(
                        "preferential attachment needs n >= 3, got {}",
                        self.n
                    )));
                }
                if !(self.pa_exponent >= 2.0) {
                    return Err(Error::InvalidArgument(format!(
                        "scale-free exponent {} must be >= 2",
                        self.pa_exponent
                    )));
                }
                if self.edges_per_node == 0 {
                    return Err(Error::InvalidArgument("edges_per_node must be >= 1".into()));
                }
            }
            TopologyKind::PoissonTree => {
                if !(self.lambda > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "Poisson parameter lambda = {} must be > 0",
                        self.lambda
                    )));
                }
            }
        }
        if let Some(b) = self.utility_beta {
            if !(b > 0.0) {
                return Err(Error::InvalidArgument(format!("utility beta {b} must be > 0")));
            }
        }
        Ok(())
    }

    /// Samples the undirected birth-ordered graph for this configuration.
    pub fn sample_graph(&self) -> Result<OrientedGraph> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            TopologyKind::PreferentialAttachment => Ok(sample_pa(
                self.n,
                self.edges_per_node,
                self.pa_exponent,
                &mut rng,
            )),
            TopologyKind::PoissonTree => {
                let min_nodes = self.min_nodes.clamp(2, self.n);
                for _ in 0..self.max_retries.max(1) {
                    let tree = sample_poisson_tree(&mut rng, self.lambda, self.depth_cap, self.n)?;
                    if tree.n >= min_nodes {
                        return Ok(tree);
                    }
                }
                Err(Error::Topology(format!(
                    "Poisson tree (lambda = {}) stayed below {} nodes in {} attempts",
                    self.lambda, min_nodes, self.max_retries
                )))
            }
        }
    }

    /// Utility curvature assigned to every consumer of a graph with `nodes` nodes.
    pub fn beta_for(&self, nodes: usize) -> f64 {
        match (self.utility_beta, self.kind) {
            (Some(b), _) => b,
            (None, TopologyKind::PreferentialAttachment) => self.pa_exponent,
            (None, TopologyKind::PoissonTree) => nodes as f64 / 20.0,
        }
    }

    /// Network built from `graph` at this configuration's `mu` and parameters.
    pub fn network_from(&self, graph: &OrientedGraph) -> Result<ExternalityNetwork> {
        self.network_at(graph, self.mu)
    }

    pub fn network_at(&self, graph: &OrientedGraph, mu: f64) -> Result<ExternalityNetwork> {
        let g = graph.mixed(mu);
        let n = graph.n;
        ExternalityNetwork::new(
            g,
            DVector::from_element(n, self.alpha),
            DVector::from_element(n, self.beta_for(n)),
            self.cost,
        )
    }
}

/// Undirected graph whose node labels follow birth order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientedGraph {
    pub n: usize,
    /// Undirected edges as `(older, newer)` with `older < newer`.
    pub edges: Vec<(usize, usize)>,
}

impl OrientedGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// Newer users influence older ones.
    pub fn g1(&self) -> DMatrix<f64> {
        let directed: Vec<(usize, usize)> = self.edges.iter().map(|&(o, y)| (o, y)).collect();
        normalized(self.n, &directed)
    }

    /// Older users influence newer ones.
    pub fn g2(&self) -> DMatrix<f64> {
        let directed: Vec<(usize, usize)> = self.edges.iter().map(|&(o, y)| (y, o)).collect();
        normalized(self.n, &directed)
    }

    pub fn mixed(&self, mu: f64) -> DMatrix<f64> {
        self.g1() * mu + self.g2() * (1.0 - mu)
    }
}

fn normalized(n: usize, directed: &[(usize, usize)]) -> DMatrix<f64> {
    let mut out_degree = vec![0usize; n];
    for &(row, _) in directed {
        out_degree[row] += 1;
    }
    let mut g = DMatrix::zeros(n, n);
    for &(row, col) in directed {
        g[(row, col)] = 1.0 / out_degree[row] as f64;
    }
    g
}

/// Offset `a` of the attachment kernel `k_in + a`, where `k_in` counts a node's
/// later-born neighbours. With `m` edges per newcomer the tail exponent is
/// `2 + a/m`, so `a = m (exponent - 2)`. Exponent 2 is the degenerate `a -> 0`
/// limit; the offset is floored at `0.1 m` (effective exponent 2.1).
pub fn pa_attachment_offset(exponent: f64, edges_per_node: usize) -> f64 {
    let m = edges_per_node as f64;
    (m * (exponent - 2.0)).max(0.1 * m)
}

fn sample_pa<R: Rng>(n: usize, edges_per_node: usize, exponent: f64, rng: &mut R) -> OrientedGraph {
    let m = edges_per_node.clamp(1, n - 1);
    let offset = pa_attachment_offset(exponent, m);
    let seed_size = (m + 1).min(n);
    let mut edges = Vec::with_capacity(seed_size * seed_size / 2 + (n - seed_size) * m);
    // one entry per later-born neighbour
    let mut later_neighbours: Vec<usize> = Vec::with_capacity(edges.capacity());
    for j in 1..seed_size {
        for i in 0..j {
            edges.push((i, j));
            later_neighbours.push(i);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for t in seed_size..n {
        targets.clear();
        let uniform_mass = offset * t as f64;
        while targets.len() < m.min(t) {
            let total = uniform_mass + later_neighbours.len() as f64;
            let u = rng.random::<f64>() * total;
            let pick = if u < uniform_mass {
                ((u / offset) as usize).min(t - 1)
            } else {
                later_neighbours[rng.random_range(0..later_neighbours.len())]
            };
            if !targets.contains(&pick) {
                targets.push(pick);
            }
        }
        targets.sort_unstable();
        for &s in &targets {
            edges.push((s, t));
            later_neighbours.push(s);
        }
    }
    OrientedGraph { n, edges }
}

/// One draw of the depth-capped Poisson branching process, explored breadth
/// first and truncated once `max_nodes` nodes exist. No resampling: a lone
/// root is a valid outcome.
pub fn sample_poisson_tree<R: Rng>(
    rng: &mut R,
    lambda: f64,
    depth_cap: usize,
    max_nodes: usize,
) -> Result<OrientedGraph> {
    let offspring = Poisson::new(lambda)
        .map_err(|e| Error::InvalidArgument(format!("Poisson({lambda}): {e}")))?;
    let max_nodes = max_nodes.max(1);
    let mut depth = vec![0usize];
    let mut edges = Vec::new();
    let mut head = 0;
    while head < depth.len() && depth.len() < max_nodes {
        let d = depth[head];
        if d < depth_cap {
            let children = offspring.sample(rng) as usize;
            for _ in 0..children {
                if depth.len() >= max_nodes {
                    break;
                }
                edges.push((head, depth.len()));
                depth.push(d + 1);
            }
        }
        head += 1;
    }
    Ok(OrientedGraph {
        n: depth.len(),
        edges,
    })
}

pub fn generate_pa(config: &TopologyConfig) -> Result<ExternalityNetwork> {
    if config.kind != TopologyKind::PreferentialAttachment {
        return Err(Error::InvalidArgument(
            "generate_pa needs a preferential-attachment config".into(),
        ));
    }
    let graph = config.sample_graph()?;
    config.network_from(&graph)
}

pub fn generate_poisson_tree(config: &TopologyConfig) -> Result<ExternalityNetwork> {
    if config.kind != TopologyKind::PoissonTree {
        return Err(Error::InvalidArgument(
            "generate_poisson_tree needs a Poisson-tree config".into(),
        ));
    }
    let graph = config.sample_graph()?;
    config.network_from(&graph)
}
