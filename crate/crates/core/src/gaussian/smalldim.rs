//! Deterministic multivariate normal CDFs and negative-orthant moments for
//! small dimensions.
//!
//! The likelihood kernels evaluate conditional Gaussian probabilities inside
//! tight loops; the randomized-QMC estimator is accurate but far too slow
//! there. For dimensions up to [`MAX_NESTED_DIM`] these routines are exact
//! quadratures:
//!
//! - dimension 2: the Drezner/Genz bivariate rule;
//! - dimension 3: Plackett's identity, integrating the correlation path from
//!   a block-diagonal start with Gauss-Legendre nodes;
//! - dimensions 4..6: condition on one coordinate and integrate its
//!   truncated marginal on the probability scale, nesting the lower
//!   dimensional CDF (the conditional correlation structure is fixed, only
//!   bounds move);
//! - orthant moments `E[|Y_k|^p 1{Y <= 0}]`: a one-dimensional integral over
//!   `Y_k` whose inner factor is the conditional CDF above.

use nalgebra::DMatrix;

use super::bivariate_cdf;
use crate::numeric::{norm_cdf, norm_quantile, SQRT_2PI};

/// Largest dimension served by the nested deterministic CDF.
pub const MAX_NESTED_DIM: usize = 6;

/// 30-point Gauss-Legendre rule on [0, 1] (nodes, weights).
const GL30: [(f64, f64); 30] = gl30();

/// 16-point Gauss-Legendre rule on [0, 1].
const GL16: [(f64, f64); 16] = gl16();

const fn gl30() -> [(f64, f64); 30] {
    // Nodes/weights of the 15-point half rule on [-1, 1], mirrored.
    const X: [f64; 15] = [
        0.0514718425553177,
        0.1538699136085835,
        0.2546369261678899,
        0.3527047255308781,
        0.4470337695380892,
        0.5366241481420199,
        0.6205261829892429,
        0.6978504947933158,
        0.7677774321048262,
        0.8295657623827684,
        0.8825605357920527,
        0.9262000474292743,
        0.9600218649683075,
        0.9836681232797472,
        0.9968934840746495,
    ];
    const W: [f64; 15] = [
        0.1028526528935588,
        0.1017623897484055,
        0.0995934205867953,
        0.0963687371746443,
        0.0921225222377861,
        0.0868997872010830,
        0.0807558952294202,
        0.0737559747377052,
        0.0659742298821805,
        0.0574931562176191,
        0.0484026728305941,
        0.0387991925696271,
        0.0287847078833234,
        0.0184664683110910,
        0.0079681924961666,
    ];
    let mut out = [(0.0, 0.0); 30];
    let mut i = 0;
    while i < 15 {
        out[2 * i] = (0.5 * (1.0 - X[i]), 0.5 * W[i]);
        out[2 * i + 1] = (0.5 * (1.0 + X[i]), 0.5 * W[i]);
        i += 1;
    }
    out
}

const fn gl16() -> [(f64, f64); 16] {
    const X: [f64; 8] = [
        0.0950125098376374,
        0.2816035507792589,
        0.4580167776572274,
        0.6178762444026438,
        0.7554044083550030,
        0.8656312023878318,
        0.9445750230732326,
        0.9894009349916499,
    ];
    const W: [f64; 8] = [
        0.1894506104550685,
        0.1826034150449236,
        0.1691565193950025,
        0.1495959888165767,
        0.1246289712555339,
        0.0951585116824928,
        0.0622535239386479,
        0.0271524594117541,
    ];
    let mut out = [(0.0, 0.0); 16];
    let mut i = 0;
    while i < 8 {
        out[2 * i] = (0.5 * (1.0 - X[i]), 0.5 * W[i]);
        out[2 * i + 1] = (0.5 * (1.0 + X[i]), 0.5 * W[i]);
        i += 1;
    }
    out
}

/// Standard bivariate normal density with correlation `r`.
#[inline]
fn phi2(x: f64, y: f64, r: f64) -> f64 {
    let det = (1.0 - r * r).max(1e-300);
    let q = (x * x - 2.0 * r * x * y + y * y) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// Standardized trivariate CDF `Pr(X1 <= b1, X2 <= b2, X3 <= b3)` via
/// Plackett's identity. The pair with the largest |correlation| is held
/// fixed; the two remaining correlations are scaled from zero along a convex
/// (hence PSD) path.
pub fn trivariate_cdf(b: [f64; 3], r12: f64, r13: f64, r23: f64) -> f64 {
    if b.iter().any(|&x| x == f64::NEG_INFINITY) {
        return 0.0;
    }
    // Order variables so the fixed pair (largest |rho|) is (2,3).
    let (b, r12, r13, r23) = {
        let a12 = r12.abs();
        let a13 = r13.abs();
        let a23 = r23.abs();
        if a23 >= a12 && a23 >= a13 {
            (b, r12, r13, r23)
        } else if a13 >= a12 {
            // swap variables 2 and 3
            ([b[0], b[2], b[1]], r13, r12, r23)
        } else {
            // swap variables 1 and 3
            ([b[2], b[1], b[0]], r23, r13, r12)
        }
    };
    let base = norm_cdf(b[0]) * bivariate_cdf(b[1], b[2], r23);
    if r12 == 0.0 && r13 == 0.0 {
        return base;
    }
    let mut corr = 0.0;
    for &(t, w) in GL30.iter() {
        // Path R(t): r12 t, r13 t, r23 fixed.
        let r12t = r12 * t;
        let r13t = r13 * t;
        let mut inner = 0.0;
        if r12 != 0.0 {
            // d/dr12 term: density of (1,2) at bounds, conditional CDF of 3.
            let det = (1.0 - r12t * r12t).max(1e-14);
            let m3 = ((r13t - r12t * r23) * b[0] + (r23 - r12t * r13t) * b[1]) / det;
            let s3 = (1.0 - (r13t * r13t + r23 * r23 - 2.0 * r12t * r13t * r23) / det)
                .max(1e-14)
                .sqrt();
            inner += r12 * phi2(b[0], b[1], r12t) * norm_cdf((b[2] - m3) / s3);
        }
        if r13 != 0.0 {
            let det = (1.0 - r13t * r13t).max(1e-14);
            let m2 = ((r12t - r13t * r23) * b[0] + (r23 - r13t * r12t) * b[2]) / det;
            let s2 = (1.0 - (r12t * r12t + r23 * r23 - 2.0 * r12t * r13t * r23) / det)
                .max(1e-14)
                .sqrt();
            inner += r13 * phi2(b[0], b[2], r13t) * norm_cdf((b[1] - m2) / s2);
        }
        corr += w * inner;
    }
    (base + corr).clamp(0.0, 1.0)
}

/// Deterministic `Pr(X <= upper)` for a centered Gaussian with covariance
/// `cov`, dimensions 1 through [`MAX_NESTED_DIM`].
pub fn mvn_cdf_det(upper: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = upper.len();
    debug_assert_eq!(cov.nrows(), d);
    if upper.iter().any(|&x| x == f64::NEG_INFINITY) {
        return 0.0;
    }
    let keep: Vec<usize> = (0..d).filter(|&i| upper[i].is_finite()).collect();
    if keep.len() < d {
        if keep.is_empty() {
            return 1.0;
        }
        let sub = cov.select_rows(keep.as_slice()).select_columns(keep.as_slice());
        let b: Vec<f64> = keep.iter().map(|&i| upper[i]).collect();
        return mvn_cdf_det(&b, &sub);
    }
    match d {
        0 => 1.0,
        1 => norm_cdf(upper[0] / cov[(0, 0)].max(1e-300).sqrt()),
        2 => {
            let s0 = cov[(0, 0)].max(1e-300).sqrt();
            let s1 = cov[(1, 1)].max(1e-300).sqrt();
            let r = (cov[(0, 1)] / (s0 * s1)).clamp(-1.0, 1.0);
            bivariate_cdf(upper[0] / s0, upper[1] / s1, r).clamp(0.0, 1.0)
        }
        3 => {
            let s: Vec<f64> = (0..3).map(|i| cov[(i, i)].max(1e-300).sqrt()).collect();
            let r = |i: usize, j: usize| (cov[(i, j)] / (s[i] * s[j])).clamp(-1.0, 1.0);
            trivariate_cdf(
                [upper[0] / s[0], upper[1] / s[1], upper[2] / s[2]],
                r(0, 1),
                r(0, 2),
                r(1, 2),
            )
        }
        _ if d <= MAX_NESTED_DIM => nested_cdf(upper, cov),
        _ => panic!("mvn_cdf_det called beyond MAX_NESTED_DIM"),
    }
}

/// Condition on the coordinate with the largest standardized bound and
/// integrate its truncated marginal on the probability scale.
fn nested_cdf(upper: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = upper.len();
    // pivot = coordinate with largest marginal probability
    let mut pivot = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..d {
        let t = upper[i] / cov[(i, i)].max(1e-300).sqrt();
        if t > best {
            best = t;
            pivot = i;
        }
    }
    let rest: Vec<usize> = (0..d).filter(|&i| i != pivot).collect();
    let spiv = cov[(pivot, pivot)].max(1e-300).sqrt();
    let p_piv = norm_cdf(upper[pivot] / spiv);
    if p_piv <= 0.0 {
        return 0.0;
    }
    // conditional covariance (fixed) and regression coefficients
    let cvv = cov[(pivot, pivot)].max(1e-300);
    let mut cond = DMatrix::<f64>::zeros(d - 1, d - 1);
    let mut reg = vec![0.0; d - 1];
    for (a, &i) in rest.iter().enumerate() {
        reg[a] = cov[(i, pivot)] / cvv;
        for (bi, &j) in rest.iter().enumerate() {
            cond[(a, bi)] = cov[(i, j)] - cov[(i, pivot)] * cov[(j, pivot)] / cvv;
        }
    }
    // Panels graded into u = 0, where the quantile transform has unbounded
    // slope; the integrand is analytic inside each panel.
    const EDGES: [f64; 7] = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.4, 1.0];
    let mut acc = 0.0;
    let mut b = vec![0.0; d - 1];
    for win in EDGES.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        for &(u, w) in GL16.iter() {
            let v = lo + (hi - lo) * u;
            let t = spiv * norm_quantile((v * p_piv).clamp(1e-300, 1.0 - 1e-16));
            for (a, &i) in rest.iter().enumerate() {
                b[a] = upper[i] - reg[a] * t;
            }
            acc += w * (hi - lo) * mvn_cdf_det(&b, &cond);
        }
    }
    (p_piv * acc).clamp(0.0, 1.0)
}

/// Deterministic negative-orthant moment `E[|Y_k|^p 1{Y <= 0}]` for a
/// centered Gaussian with covariance `cov`, `p >= 1`, dimension at most
/// `MAX_NESTED_DIM + 1` (the inner CDF has dimension `d - 1`).
///
/// Reduction: integrate over `Y_k` on the probability scale; given `Y_k = t`
/// the rest is Gaussian with fixed covariance and bounds `-reg * t`.
pub fn orthant_moment_det(cov: &DMatrix<f64>, k: usize, p: u32) -> f64 {
    let d = cov.nrows();
    debug_assert!(d >= 1 && k < d && p >= 1);
    let s_k = cov[(k, k)].max(1e-300).sqrt();
    if d == 1 {
        let pf = p as f64;
        return s_k.powf(pf) * 2.0f64.powf((pf - 1.0) / 2.0)
            * crate::numeric::gamma((pf + 1.0) / 2.0)
            / SQRT_2PI;
    }
    if p == 1 {
        // Tallis's first-moment identity: E[Y_k 1{Y <= 0}] =
        // -sum_j sigma_kj phi_{sigma_j}(0) Pr(Y_{-j} <= 0 | Y_j = 0),
        // and |Y_k| = -Y_k on the event. Each term is a (d-1)-dim orthant
        // probability of the conditional covariance.
        let mut total = 0.0;
        for j in 0..d {
            let sj = cov[(j, j)].max(1e-300).sqrt();
            let restj: Vec<usize> = (0..d).filter(|&i| i != j).collect();
            let mut condj = DMatrix::<f64>::zeros(d - 1, d - 1);
            for (a, &i1) in restj.iter().enumerate() {
                for (b1, &j1) in restj.iter().enumerate() {
                    condj[(a, b1)] =
                        cov[(i1, j1)] - cov[(i1, j)] * cov[(j1, j)] / cov[(j, j)].max(1e-300);
                }
            }
            let orthant = mvn_cdf_det(&vec![0.0; d - 1], &condj);
            total += cov[(k, j)] / (sj * SQRT_2PI) * orthant;
        }
        return total.max(0.0);
    }

    let rest: Vec<usize> = (0..d).filter(|&i| i != k).collect();
    let cvv = cov[(k, k)].max(1e-300);
    let mut cond = DMatrix::<f64>::zeros(d - 1, d - 1);
    let mut reg = vec![0.0; d - 1];
    for (a, &i) in rest.iter().enumerate() {
        reg[a] = cov[(i, k)] / cvv;
        for (bi, &j) in rest.iter().enumerate() {
            cond[(a, bi)] = cov[(i, j)] - cov[(i, k)] * cov[(j, k)] / cvv;
        }
    }
    // E = s^p int_0^{1/2} |Phi^{-1}(v)|^p CDF(rest | t(v)) dv with
    // t = s Phi^{-1}(v); panels graded into v = 0 (slow log growth of the
    // quantile).
    const EDGES: [f64; 8] = [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.5];
    let mut acc = 0.0;
    let mut b = vec![0.0; d - 1];
    for win in EDGES.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        for &(u, w) in GL16.iter() {
            let v = lo + (hi - lo) * u;
            let q = norm_quantile(v.clamp(1e-300, 0.5));
            let t = s_k * q;
            for (a, _) in rest.iter().enumerate() {
                b[a] = -reg[a] * t;
            }
            let inner = mvn_cdf_det(&b, &cond);
            acc += w * (hi - lo) * (-q).powi(p as i32) * inner;
        }
    }
    s_k.powi(p as i32) * acc.max(0.0)
}
