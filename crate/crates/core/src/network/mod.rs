//! Consumer externality networks.
//!
//! A network holds the influence matrix `G` (entry `(i, j)` is the per-unit
//! benefit consumer `i` receives from consumer `j`'s investment) together with
//! the quadratic utility parameters of every consumer and the vendor's
//! marginal cost.

mod io;
mod topology;

pub use io::{read_edge_list, read_network, write_edge_list, write_network};
pub use topology::{
    generate_pa, generate_poisson_tree, pa_attachment_offset, sample_poisson_tree, OrientedGraph,
    TopologyConfig, TopologyKind, DEFAULT_DEPTH_CAP, DEFAULT_TREE_RETRIES,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalityNetwork {
    g: DMatrix<f64>,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    cost: f64,
    strictly_concave: bool,
    positive_demand: bool,
}

impl ExternalityNetwork {
    /// Validates shapes and the sign/diagonal invariants of `g`.
    ///
    /// Violations of the concavity (`2 beta_i > sum_j h_ij`) and positive-demand
    /// (`alpha_i > c`) assumptions are recorded as flags, not rejected.
    pub fn new(g: DMatrix<f64>, alpha: DVector<f64>, beta: DVector<f64>, cost: f64) -> Result<Self> {
        if !g.is_square() {
            return Err(Error::NotSquare {
                rows: g.nrows(),
                cols: g.ncols(),
            });
        }
        let n = g.nrows();
        if alpha.len() != n {
            return Err(Error::DimensionMismatch {
                what: "alpha",
                expected: n,
                found: alpha.len(),
            });
        }
        if beta.len() != n {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: n,
                found: beta.len(),
            });
        }
        if !cost.is_finite() || alpha.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite utility parameter".into()));
        }
        for i in 0..n {
            if g[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "influence matrix has nonzero diagonal at {i}"
                )));
            }
            for j in 0..n {
                let h = g[(i, j)];
                if !(h >= 0.0) || !h.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "influence weight ({i},{j}) = {h} must be finite and nonnegative"
                    )));
                }
            }
        }
        let strictly_concave = (0..n).all(|i| 2.0 * beta[i] > g.row(i).sum());
        let positive_demand = alpha.iter().all(|a| *a > cost);
        Ok(Self {
            g,
            alpha,
            beta,
            cost,
            strictly_concave,
            positive_demand,
        })
    }

    /// Network with homogeneous parameters `alpha_i = alpha`, `beta_i = beta`.
    pub fn homogeneous(g: DMatrix<f64>, alpha: f64, beta: f64, cost: f64) -> Result<Self> {
        let n = g.nrows();
        Self::new(
            g,
            DVector::from_element(n, alpha),
            DVector::from_element(n, beta),
            cost,
        )
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn strictly_concave(&self) -> bool {
        self.strictly_concave
    }

    pub fn positive_demand(&self) -> bool {
        self.positive_demand
    }

    /// Diagonal of `Q`, i.e. `2 beta`.
    pub fn q_diag(&self) -> DVector<f64> {
        &self.beta * 2.0
    }

    /// Diagonal of `Q^{-1}`; fails when some `beta_i` is zero or negative.
    pub fn q_inv_diag(&self) -> Result<DVector<f64>> {
        self.ensure_positive_beta()?;
        Ok(self.beta.map(|b| 1.0 / (2.0 * b)))
    }

    pub(crate) fn ensure_positive_beta(&self) -> Result<()> {
        match self.beta.iter().position(|b| !(*b > 0.0)) {
            Some(index) => Err(Error::SingularCurvature {
                index,
                value: self.beta[index],
            }),
            None => Ok(()),
        }
    }

    /// `R = Q - G`.
    pub fn response_matrix(&self) -> DMatrix<f64> {
        let mut r = -self.g.clone();
        for i in 0..self.n() {
            r[(i, i)] += 2.0 * self.beta[i];
        }
        r
    }

    /// `G' = (G + G^T) / 2`.
    pub fn symmetrized_g(&self) -> DMatrix<f64> {
        crate::linalg::symmetric_part(&self.g)
    }

    /// `Q - G'`, the symmetric part of the response matrix.
    pub fn symmetric_response(&self) -> DMatrix<f64> {
        crate::linalg::symmetric_part(&self.response_matrix())
    }

    /// `(alpha - c 1) / 2`, the weight vector shared by the monopoly formulas.
    pub fn half_margin(&self) -> DVector<f64> {
        self.alpha.map(|a| (a - self.cost) / 2.0)
    }

    /// Same network with a replacement `alpha`.
    pub fn with_alpha(&self, alpha: DVector<f64>) -> Result<Self> {
        Self::new(self.g.clone(), alpha, self.beta.clone(), self.cost)
    }

    /// Same network with the influence matrix scaled by `t`.
    pub fn with_scaled_g(&self, t: f64) -> Result<Self> {
        Self::new(&self.g * t, self.alpha.clone(), self.beta.clone(), self.cost)
    }

    /// Sub-network induced by `idx` (rows and columns of `G` restricted).
    pub fn restrict(&self, idx: &[usize]) -> Result<Self> {
        let g = DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.g[(idx[a], idx[b])]);
        let alpha = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.alpha[i]));
        let beta = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.beta[i]));
        Self::new(g, alpha, beta, self.cost)
    }
}

/// Row-normalize a directed 0/1 adjacency: `h_ij = 1/d_i` on edges, where
/// `d_i` is the out-count of row `i`. Rows without edges stay zero.
pub fn row_normalize(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !adjacency.is_square() {
        return Err(Error::NotSquare {
            rows: adjacency.nrows(),
            cols: adjacency.ncols(),
        });
    }
    let n = adjacency.nrows();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "adjacency has a self-loop at {i}"
            )));
        }
        let mut degree = 0usize;
        for j in 0..n {
            let a = adjacency[(i, j)];
            if a == 1.0 {
                degree += 1;
            } else if a != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "adjacency entry ({i},{j}) = {a} is not 0/1"
                )));
            }
        }
        if degree > 0 {
            let w = 1.0 / degree as f64;
            for j in 0..n {
                if adjacency[(i, j)] == 1.0 {
                    g[(i, j)] = w;
                }
            }
        }
    }
    Ok(g)
}

/// Build a network from a directed 0/1 adjacency with row-normalized weights.
pub fn build_network(
    adjacency: &DMatrix<f64>,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    cost: f64,
) -> Result<ExternalityNetwork> {
    let g = row_normalize(adjacency)?;
    ExternalityNetwork::new(g, alpha, beta, cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_network() {
        let adj = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let net = build_network(
            &adj,
            DVector::from_element(2, 2.0),
            DVector::from_element(2, 2.0),
            0.5,
        )
        .unwrap();
        assert_eq!(net.g(), &adj);
        assert!(net.strictly_concave());
        assert!(net.positive_demand());
    }

    #[test]
    fn empty_adjacency_gives_zero_matrix() {
        let adj = DMatrix::zeros(3, 3);
        let net = build_network(
            &adj,
            DVector::from_element(3, 2.0),
            DVector::from_element(3, 2.0),
            0.5,
        )
        .unwrap();
        assert!(net.g().iter().all(|v| *v == 0.0));
        assert!(net.strictly_concave());
    }

    #[test]
    fn rows_are_normalized_and_isolated_rows_stay_zero() {
        let adj = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        );
        let g = row_normalize(&adj).unwrap();
        assert_eq!(g[(0, 1)], 0.5);
        assert_eq!(g[(0, 2)], 0.5);
        assert_eq!(g.row(1).sum(), 0.0);
        assert_eq!(g[(2, 0)], 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let adj = DMatrix::zeros(3, 3);
        let err = build_network(
            &adj,
            DVector::from_element(2, 2.0),
            DVector::from_element(3, 2.0),
            0.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { what: "alpha", .. }));
    }

    #[test]
    fn non_square_is_rejected() {
        let adj = DMatrix::zeros(2, 3);
        assert!(matches!(row_normalize(&adj), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn concavity_violation_is_flagged_not_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let net = ExternalityNetwork::homogeneous(g, 0.4, 0.25, 0.5).unwrap();
        assert!(!net.strictly_concave());
        assert!(!net.positive_demand());
    }

    #[test]
    fn negative_weight_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(ExternalityNetwork::homogeneous(g, 2.0, 2.0, 0.5).is_err());
    }
}
