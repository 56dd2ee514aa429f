//! Asymptotic covariance estimators: full-information, sandwich, and the
//! per-exceedance / per-block outer-product forms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// How a reported covariance was estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum CovarianceMethod {
    /// Inverse observed information divided by `n` (maximum likelihood).
    FullInfo,
    /// `I^-1 J I^-1 / n` for composite likelihoods.
    Sandwich,
    /// Per-exceedance information, scaled by the exceedance count.
    CensoredInfo,
    /// Per-block information, scaled by the block count.
    OccurrenceInfo,
}

pub(crate) fn outer_product_mean(scores: &[Vec<f64>]) -> DMatrix<f64> {
    let n = scores.len();
    let p = scores.first().map(|s| s.len()).unwrap_or(0);
    let mut j = DMatrix::zeros(p, p);
    for s in scores {
        for a in 0..p {
            for b in 0..p {
                j[(a, b)] += s[a] * s[b];
            }
        }
    }
    j / n as f64
}

fn checked_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    if p == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Optimizer(format!("{what} matrix is singular; covariance omitted")))
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    for a in 0..p {
        for b in (a + 1)..p {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Smallest eigenvalue (symmetric input), for PSD diagnostics.
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    nalgebra::SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Covariance of a full or composite likelihood estimator:
/// `I^-1 / n` when `mle` (the information identity), otherwise the sandwich
/// `I^-1 J I^-1 / n` with `J` the mean outer product of per-observation
/// scores.
pub fn covariance_full(
    scores: &[Vec<f64>],
    minus_hessian: &DMatrix<f64>,
    n: usize,
    mle: bool,
) -> Result<DMatrix<f64>> {
    if n == 0 || scores.len() != n {
        return Err(Error::invalid("score rows must match the observation count"));
    }
    let i_inv = checked_inverse(minus_hessian, "information")?;
    let cov = if mle {
        i_inv / n as f64
    } else {
        let j = outer_product_mean(scores);
        &i_inv * j * &i_inv / n as f64
    };
    Ok(symmetrize(cov))
}

/// Censored-threshold covariance: with `k_hat = |N_k| / V*(e)` exceedance
/// blocks, the variance `(k_hat V* I)^-1` collapses to the inverse of the
/// summed per-exceedance score outer products.
pub fn covariance_censored(scores: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = scores.len();
    if n == 0 {
        return Err(Error::invalid("no exceedances"));
    }
    let j = outer_product_mean(scores);
    Ok(symmetrize(checked_inverse(&j, "per-exceedance information")? / n as f64))
}

/// Occurrence-likelihood covariance: inverse per-block information over `k`.
pub fn covariance_occurrence(scores: &[Vec<f64>], k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || scores.len() != k {
        return Err(Error::invalid("score rows must match the block count"));
    }
    let j = outer_product_mean(scores);
    Ok(symmetrize(checked_inverse(&j, "per-block information")? / k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_sandwich_hand_value() {
        // scores all +-1, Hessian -1: sandwich = 1/n.
        let n = 8;
        let scores: Vec<Vec<f64>> =
            (0..n).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let minus_h = DMatrix::from_element(1, 1, 1.0);
        let cov = covariance_full(&scores, &minus_h, n, false).unwrap();
        assert_relative_eq!(cov[(0, 0)], 1.0 / n as f64, epsilon = 1e-12);
        // MLE variant agrees here because J = I = 1
        let cov = covariance_full(&scores, &minus_h, n, true).unwrap();
        assert_relative_eq!(cov[(0, 0)], 1.0 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn censored_halves_with_doubled_count() {
        let scores: Vec<Vec<f64>> = (0..10).map(|i| vec![if i % 2 == 0 { 0.8 } else { -0.8 }]).collect();
        let single = covariance_censored(&scores).unwrap();
        let doubled: Vec<Vec<f64>> = scores.iter().chain(scores.iter()).cloned().collect();
        let double = covariance_censored(&doubled).unwrap();
        assert_relative_eq!(double[(0, 0)], single[(0, 0)] / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn occurrence_k1_no_shrinkage() {
        // one block, scalar parameter: covariance = J^{-1} with no 1/k factor
        let scores = vec![vec![0.5]];
        let cov = covariance_occurrence(&scores, 1).unwrap();
        assert_relative_eq!(cov[(0, 0)], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_and_symmetric() {
        let scores: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let cov = covariance_censored(&scores).unwrap();
        assert_relative_eq!(cov[(0, 1)], cov[(1, 0)], epsilon = 1e-12);
        assert!(min_eigenvalue(&cov) >= -1e-8);
    }

    #[test]
    fn singular_information_rejected() {
        // identical scores: rank-1 outer product in 2 parameters
        let scores: Vec<Vec<f64>> = (0..5).map(|_| vec![1.0, 2.0]).collect();
        assert!(covariance_censored(&scores).is_err());
    }
}
