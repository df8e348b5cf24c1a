#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netprice::equilibrium::{ne_closed_form, PriceVector};
use netprice::linalg::cholesky_above;
use netprice::network::{row_normalize, ExternalityNetwork};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Directed Erdos-Renyi graph with edge probability drawn from U[0.2, 0.6],
/// row-normalized; `beta_i ~ U[1, 3]`, `alpha_i ~ U[1.5, 2.5]`, `c = 0.5`.
/// Always strictly concave since every row of `G` sums to at most one.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> ExternalityNetwork {
    let p: f64 = rng.random_range(0.2..0.6);
    let adj = DMatrix::from_fn(n, n, |i, j| {
        if i != j && rng.random_bool(p) {
            1.0
        } else {
            0.0
        }
    });
    let g = row_normalize(&adj).unwrap();
    let alpha = DVector::from_fn(n, |_, _| rng.random_range(1.5..2.5));
    let beta = DVector::from_fn(n, |_, _| rng.random_range(1.0..3.0));
    ExternalityNetwork::new(g, alpha, beta, 0.5).unwrap()
}

/// Same family, redrawn until `Q - (G + G^T)/2` is positive definite.
pub fn random_pd_network(rng: &mut ChaCha8Rng, n: usize) -> ExternalityNetwork {
    loop {
        let net = random_network(rng, n);
        if cholesky_above(&net.symmetric_response(), 1e-10).is_ok() {
            return net;
        }
    }
}

/// Profit computed from scratch: equilibrium investments, then `(p - c)^T x`.
pub fn direct_profit(net: &ExternalityNetwork, p: &DVector<f64>) -> f64 {
    let x = ne_closed_form(net, &PriceVector(p.clone())).unwrap();
    p.iter().zip(x.0.iter()).map(|(p, x)| (p - net.cost()) * x).sum()
}

/// Four consumers with asymmetric influence and heterogeneous parameters.
pub fn four_node() -> ExternalityNetwork {
    let third = 1.0 / 3.0;
    let g = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.5, 0.5, 0.0, //
            third, 0.0, third, third, //
            0.0, 1.0, 0.0, 0.0, //
            0.5, 0.0, 0.5, 0.0,
        ],
    );
    ExternalityNetwork::new(
        g,
        DVector::from_vec(vec![2.0, 2.2, 1.8, 2.1]),
        DVector::from_vec(vec![1.5, 2.0, 2.5, 1.2]),
        0.5,
    )
    .unwrap()
}

/// Six consumers, homogeneous `alpha = 2`, `beta = 1`, `c = 0.5`.
pub fn six_node() -> ExternalityNetwork {
    let adj = [
        [0, 0, 0, 1, 1, 1],
        [1, 0, 1, 0, 0, 1],
        [1, 0, 0, 0, 1, 1],
        [0, 1, 0, 0, 0, 1],
        [0, 0, 1, 0, 0, 1],
        [0, 1, 0, 1, 1, 0],
    ];
    let a = DMatrix::from_fn(6, 6, |i, j| adj[i][j] as f64);
    ExternalityNetwork::homogeneous(row_normalize(&a).unwrap(), 2.0, 1.0, 0.5).unwrap()
}

pub fn sign_vectors(n: usize) -> impl Iterator<Item = Vec<i8>> {
    (0..1u32 << n).map(move |mask| {
        (0..n)
            .map(|i| if mask >> (n - 1 - i) & 1 == 1 { 1 } else { -1 })
            .collect()
    })
}
