use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{QuadraticForm, SdpSolution, SignVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingOutcome {
    /// Best sign vector over all trials (first one on ties).
    pub y_best: SignVector,
    pub w_alg: f64,
    pub w_mean: f64,
    /// Standard error of `w_mean`.
    pub w_std_err: f64,
    pub trials: usize,
}

/// `y_i = sign(nu_i . g)` with `sign(0) = +1`, negated as a whole when the
/// homogenizing coordinate comes out negative.
pub fn round_with_normal(sol: &SdpSolution, normal: &DVector<f64>) -> SignVector {
    let proj = sol.vectors.transpose() * normal;
    let m = proj.len();
    let flip = if proj[m - 1] < 0.0 { -1 } else { 1 };
    SignVector(
        proj.iter()
            .take(m - 1)
            .map(|&p| flip * if p < 0.0 { -1 } else { 1 })
            .collect(),
    )
}

/// Independent random hyperplanes; trial `t` draws from stream `t` of a
/// generator seeded with `rng_seed`.
pub fn round_hyperplane(
    sol: &SdpSolution,
    qf: &QuadraticForm,
    trials: usize,
    rng_seed: u64,
) -> Result<RoundingOutcome> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one rounding trial required".into()));
    }
    let k = sol.vectors.nrows();
    let mut best: Option<(SignVector, f64)> = None;
    let mut values = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(t as u64);
        let normal = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
        let y = round_with_normal(sol, &normal);
        let w = qf.objective(&y);
        values.push(w);
        if best.as_ref().is_none_or(|(_, b)| w > *b) {
            best = Some((y, w));
        }
    }
    let (y_best, w_alg) = best.expect("trials > 0");
    let mean = values.iter().sum::<f64>() / trials as f64;
    let std_err = if trials > 1 {
        let var = values.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(RoundingOutcome {
        y_best,
        w_alg,
        w_mean: mean,
        w_std_err: std_err,
        trials,
    })
}

/// Exact expectation of the rounded objective:
/// `z + sum_ij Q'_ij (1 - 2 theta_ij / pi)` with `theta_ij` the angle between
/// `nu_i` and `nu_j`.
pub fn expected_rounded_value(sol: &SdpSolution, qf: &QuadraticForm) -> f64 {
    let c = qf.homogenized();
    let gram = sol.gram();
    let m = c.nrows();
    let mut total = qf.z;
    for i in 0..m {
        for j in 0..m {
            if i != j && c[(i, j)] != 0.0 {
                let cos = gram[(i, j)].clamp(-1.0, 1.0);
                total += c[(i, j)] * (1.0 - 2.0 * cos.acos() / PI);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::super::sdp::solve_sdp_relaxation;
    use super::*;
    use nalgebra::DMatrix;

    fn triangle() -> QuadraticForm {
        QuadraticForm {
            qhat: DMatrix::from_row_slice(
                3,
                3,
                &[0.0, -0.5, -0.5, -0.5, 0.0, -0.5, -0.5, -0.5, 0.0],
            ),
            d: DVector::from_column_slice(&[0.2, 0.0, -0.1]),
            z: 0.3,
        }
    }

    #[test]
    fn sign_convention_and_global_flip() {
        let sol = SdpSolution {
            vectors: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, 0.0]),
            sdp_objective: 0.0,
            dual_bound: 0.0,
            residuals: super::super::SdpResiduals {
                unit_norm: 0.0,
                stationarity: 0.0,
                dual_infeasibility: 0.0,
                sweeps: 0,
            },
        };
        // projections (1, 0, -1): last negative, so flip (+1, +1) -> (-1, -1)
        let y = round_with_normal(&sol, &DVector::from_column_slice(&[1.0, 0.0]));
        assert_eq!(y, SignVector(vec![-1, -1]));
        // projections (0, 1, 0): zero maps to +1
        let y = round_with_normal(&sol, &DVector::from_column_slice(&[0.0, 1.0]));
        assert_eq!(y, SignVector(vec![1, 1]));
    }

    #[test]
    fn rounding_is_reproducible() {
        let qf = triangle();
        let sol = solve_sdp_relaxation(&qf, 1e-9).unwrap();
        let a = round_hyperplane(&sol, &qf, 50, 11).unwrap();
        let b = round_hyperplane(&sol, &qf, 50, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.w_alg >= a.w_mean);
    }

    #[test]
    fn empirical_mean_tracks_expectation() {
        let qf = triangle();
        let sol = solve_sdp_relaxation(&qf, 1e-9).unwrap();
        let out = round_hyperplane(&sol, &qf, 20_000, 3).unwrap();
        let expected = expected_rounded_value(&sol, &qf);
        assert!(
            (out.w_mean - expected).abs() < 4.0 * out.w_std_err + 1e-12,
            "{} vs {expected} (se {})",
            out.w_mean,
            out.w_std_err
        );
    }

    #[test]
    fn zero_trials_rejected() {
        let qf = triangle();
        let sol = solve_sdp_relaxation(&qf, 1e-9).unwrap();
        assert!(round_hyperplane(&sol, &qf, 0, 0).is_err());
    }
}
