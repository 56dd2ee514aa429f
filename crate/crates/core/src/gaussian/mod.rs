//! Multivariate normal rectangle probabilities and negative-orthant moments.
//!
//! The workhorse is the separation-of-variables transform of Genz: after a
//! variable reordering and Cholesky factorization, the rectangle probability
//! becomes an integral over the unit cube which is estimated by randomized
//! quasi-Monte Carlo (Richtmyer lattice points under a baker transform, with
//! independent random shifts supplying an error estimate). Dimension 1 and 2
//! take exact paths: the univariate CDF and the Drezner/Genz bivariate rule.
//!
//! Estimates are deterministic given the seed, whatever the thread count.

pub mod smalldim;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::combinatorics::ComponentSet;
use crate::error::{Error, Result};
use crate::numeric::{gamma, ln_norm_pdf, norm_cdf, norm_pdf, norm_quantile, SQRT_2PI};

/// Hard cap on the dimension of MVN probability estimates. Accuracy degrades
/// above ~20; calls up to 25 are allowed but should be treated with care.
pub const MVN_DIM_CAP: usize = 25;

/// Number of random shifts in the RQMC estimator.
const QMC_SHIFTS: usize = 12;
/// Initial and maximal points per shift.
const QMC_START_POINTS: usize = 128;
const QMC_MAX_POINTS: usize = 1 << 15;

/// A centered (or shifted) Gaussian law given by its covariance matrix.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    cov: DMatrix<f64>,
    mean: DVector<f64>,
}

impl GaussianSpec {
    /// Centered Gaussian with the given covariance.
    pub fn centered(cov: DMatrix<f64>) -> Result<Self> {
        let mean = DVector::zeros(cov.nrows());
        GaussianSpec::new(cov, mean)
    }

    pub fn new(cov: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::invalid("covariance must be square"));
        }
        if cov.nrows() == 0 {
            return Err(Error::invalid("covariance must be nonempty"));
        }
        if mean.len() != cov.nrows() {
            return Err(Error::invalid("mean length must match covariance dimension"));
        }
        let scale = cov.diagonal().amax().max(1.0);
        for i in 0..cov.nrows() {
            for j in (i + 1)..cov.ncols() {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "covariance not symmetric at ({i},{j}): {} vs {}",
                        cov[(i, j)],
                        cov[(j, i)]
                    )));
                }
            }
        }
        Ok(GaussianSpec { cov, mean })
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

/// An estimated probability (or orthant moment) with its error bar.
///
/// `abs_error` is a 3-sigma half-width from the spread of the QMC shift
/// means; exact paths report machine-level error. For CDF estimates the value
/// lies in [0, 1]; orthant moments are only guaranteed nonnegative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbEstimate {
    pub value: f64,
    pub abs_error: f64,
    pub n_points: u64,
}

impl ProbEstimate {
    fn exact(value: f64) -> Self {
        ProbEstimate { value, abs_error: 1e-15, n_points: 0 }
    }
}

/// Cholesky factorization with a jitter ladder `0, 1e-12, 1e-10, 1e-8`
/// (relative to the mean diagonal). Errors if the factor's diagonal suggests
/// a condition number above 1e12 even after the maximal jitter.
pub(crate) fn cholesky_with_jitter(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = cov.nrows();
    let scale = cov.diagonal().iter().sum::<f64>() / n as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut last_cond = f64::NAN;
    for &jit in &[0.0, 1e-12, 1e-10, 1e-8] {
        let mut work = cov.clone();
        if jit > 0.0 {
            for i in 0..n {
                work[(i, i)] += jit * scale;
            }
        }
        if let Some(chol) = Cholesky::<f64, Dyn>::new(work) {
            let l = chol.l();
            let dmax = (0..n).map(|i| l[(i, i)]).fold(0.0f64, f64::max);
            let dmin = (0..n).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
            let cond = (dmax / dmin).powi(2);
            last_cond = cond;
            if cond <= 1e12 {
                return Ok((l.into(), jit * scale));
            }
        }
    }
    Err(Error::NotFactorizable(format!(
        "Cholesky failed up to jitter 1e-8 (diagonal condition estimate {last_cond:.3e})"
    )))
}

/// Fractional parts of square roots of the first 30 primes: the Richtmyer
/// quasi-random generating vector.
fn richtmyer_lattice(dim: usize) -> Vec<f64> {
    const PRIMES: [u32; 30] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83,
        89, 97, 101, 103, 107, 109, 113,
    ];
    PRIMES[..dim].iter().map(|&p| (p as f64).sqrt().fract()).collect()
}

/// Randomized QMC mean of `f` over the `dim`-dimensional unit cube.
///
/// Doubles the point count until the 3-sigma shift error meets `target_err`
/// or the point cap is reached. Deterministic given the seed.
fn rqmc_mean<F: FnMut(&[f64]) -> f64>(
    dim: usize,
    target_err: f64,
    seed: u64,
    mut f: F,
) -> ProbEstimate {
    use rand::{Rng, SeedableRng};

    let lattice = richtmyer_lattice(dim);
    // One independent uniform shift per QMC replicate.
    let shifts: Vec<Vec<f64>> = (0..QMC_SHIFTS)
        .map(|r| {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            (0..dim).map(|_| rng.random::<f64>()).collect()
        })
        .collect();

    let mut sums = vec![0.0f64; QMC_SHIFTS];
    let mut n_done = 0usize;
    let mut point = vec![0.0f64; dim];
    let mut batch = QMC_START_POINTS;
    loop {
        for (r, shift) in shifts.iter().enumerate() {
            let mut local = 0.0;
            for s in (n_done + 1)..=(n_done + batch) {
                let sf = s as f64;
                for k in 0..dim {
                    // Baker (tent) transform of the shifted lattice point.
                    let t = (sf * lattice[k] + shift[k]).fract();
                    point[k] = (2.0 * t - 1.0).abs();
                }
                local += f(&point);
            }
            sums[r] += local;
        }
        n_done += batch;

        let means: Vec<f64> = sums.iter().map(|s| s / n_done as f64).collect();
        let mean = means.iter().sum::<f64>() / QMC_SHIFTS as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
            / ((QMC_SHIFTS * (QMC_SHIFTS - 1)) as f64);
        let err = 3.0 * var.sqrt();
        if err <= target_err || n_done >= QMC_MAX_POINTS {
            return ProbEstimate {
                value: mean,
                abs_error: err,
                n_points: (n_done * QMC_SHIFTS) as u64,
            };
        }
        batch = n_done; // double
    }
}

/// Reordered Cholesky factorization for the separation-of-variables
/// transform: variables enter in order of increasing conditional probability
/// (Genz's outermost-smallest heuristic), with truncated-expectation
/// substitution for the conditioning values.
struct SovFactor {
    lower: DMatrix<f64>,
    bounds: Vec<f64>,
    /// `perm[i]` = original index of the variable at SOV position `i`.
    perm: Vec<usize>,
}

fn sov_factor(cov: &DMatrix<f64>, upper: &[f64]) -> Result<SovFactor> {
    let n = cov.nrows();
    // Jitter once up front so every pivot stays positive.
    let (_, jit) = cholesky_with_jitter(cov)?;
    let mut sigma = cov.clone();
    if jit > 0.0 {
        for i in 0..n {
            sigma[(i, i)] += jit;
        }
    }

    let mut lower = DMatrix::<f64>::zeros(n, n);
    let mut b: Vec<f64> = upper.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut y = vec![0.0f64; n];

    for i in 0..n {
        // Pick the remaining variable with the smallest conditional CDF value.
        let mut best = i;
        let mut best_p = f64::INFINITY;
        for j in i..n {
            let lsum: f64 = (0..i).map(|k| lower[(j, k)] * lower[(j, k)]).sum();
            let var = (sigma[(j, j)] - lsum).max(0.0);
            let sd = var.sqrt();
            let num = b[j] - (0..i).map(|k| lower[(j, k)] * y[k]).sum::<f64>();
            let p = if sd > 0.0 {
                norm_cdf(num / sd)
            } else if num >= 0.0 {
                1.0
            } else {
                0.0
            };
            if p < best_p {
                best_p = p;
                best = j;
            }
        }
        if best != i {
            sigma.swap_rows(i, best);
            sigma.swap_columns(i, best);
            b.swap(i, best);
            perm.swap(i, best);
            for k in 0..i {
                let t = lower[(i, k)];
                lower[(i, k)] = lower[(best, k)];
                lower[(best, k)] = t;
            }
        }

        let lsum: f64 = (0..i).map(|k| lower[(i, k)] * lower[(i, k)]).sum();
        let piv = (sigma[(i, i)] - lsum).max(1e-300);
        let lii = piv.sqrt();
        lower[(i, i)] = lii;
        for r in (i + 1)..n {
            let s: f64 = (0..i).map(|k| lower[(r, k)] * lower[(i, k)]).sum();
            lower[(r, i)] = (sigma[(r, i)] - s) / lii;
        }

        // Expected value of the truncated innovation, used only for ordering.
        let ehat = (b[i] - (0..i).map(|k| lower[(i, k)] * y[k]).sum::<f64>()) / lii;
        let phi = norm_cdf(ehat);
        y[i] = if phi > 1e-12 { -norm_pdf(ehat) / phi } else { -ehat.abs() - 1.0 };
    }

    Ok(SovFactor { lower, bounds: b, perm })
}

impl SovFactor {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// SOV integrand for the plain CDF: uses dim-1 uniforms.
    fn cdf_value(&self, w: &[f64]) -> f64 {
        let n = self.dim();
        let mut y = vec![0.0f64; n - 1];
        let mut e = norm_cdf(self.bounds[0] / self.lower[(0, 0)]);
        let mut prod = e;
        for i in 1..n {
            if prod == 0.0 {
                return 0.0;
            }
            let u = (w[i - 1] * e).clamp(1e-16, 1.0 - 1e-16);
            y[i - 1] = norm_quantile(u);
            let num: f64 =
                self.bounds[i] - (0..i).map(|k| self.lower[(i, k)] * y[k]).sum::<f64>();
            e = norm_cdf(num / self.lower[(i, i)]);
            prod *= e;
        }
        prod
    }

    /// SOV integrand carrying the weight `|x_k|^p` where `x = L y` and `k`
    /// refers to the *original* variable index. Uses dim uniforms.
    fn moment_value(&self, w: &[f64], k_orig: usize, p: i32) -> f64 {
        let n = self.dim();
        let k_pos = self.perm.iter().position(|&j| j == k_orig).expect("index in permutation");
        let mut y = vec![0.0f64; n];
        let mut prod = 1.0;
        let mut e;
        for i in 0..n {
            let num: f64 =
                self.bounds[i] - (0..i).map(|k| self.lower[(i, k)] * y[k]).sum::<f64>();
            e = norm_cdf(num / self.lower[(i, i)]);
            prod *= e;
            if prod == 0.0 {
                return 0.0;
            }
            let u = (w[i] * e).clamp(1e-16, 1.0 - 1e-16);
            y[i] = norm_quantile(u);
        }
        let xk: f64 = (0..=k_pos).map(|j| self.lower[(k_pos, j)] * y[j]).sum();
        prod * xk.abs().powi(p)
    }
}

/// `Pr(X <= upper)` for `X ~ g`, by randomized QMC over the Genz transform.
///
/// Infinite bounds are handled exactly: `+inf` coordinates are marginalized
/// out, any `-inf` coordinate gives probability zero.
pub fn mvn_cdf(upper: &[f64], g: &GaussianSpec, target_err: f64, seed: u64) -> Result<ProbEstimate> {
    let n = g.dim();
    if upper.len() != n {
        return Err(Error::invalid("bound vector length must match dimension"));
    }
    if n > MVN_DIM_CAP {
        return Err(Error::DimensionCap { what: "mvn_cdf", dim: n, cap: MVN_DIM_CAP });
    }
    if !(target_err > 0.0) {
        return Err(Error::invalid("target_err must be positive"));
    }
    let centered: Vec<f64> = (0..n).map(|i| upper[i] - g.mean[i]).collect();
    if centered.iter().any(|b| *b == f64::NEG_INFINITY) {
        return Ok(ProbEstimate::exact(0.0));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| centered[i].is_finite()).collect();
    if keep.is_empty() {
        return Ok(ProbEstimate::exact(1.0));
    }
    let b: Vec<f64> = keep.iter().map(|&i| centered[i]).collect();
    let cov = g.cov.select_rows(keep.as_slice()).select_columns(keep.as_slice());

    match keep.len() {
        1 => {
            let sd = cov[(0, 0)].sqrt();
            if sd == 0.0 {
                return Ok(ProbEstimate::exact(if b[0] >= 0.0 { 1.0 } else { 0.0 }));
            }
            Ok(ProbEstimate::exact(norm_cdf(b[0] / sd)))
        }
        2 => {
            let s1 = cov[(0, 0)].sqrt();
            let s2 = cov[(1, 1)].sqrt();
            if s1 == 0.0 || s2 == 0.0 {
                // Degenerate coordinate: reduces to a univariate bound.
                let p = if s1 == 0.0 {
                    if b[0] >= 0.0 { norm_cdf(b[1] / s2.max(1e-300)) } else { 0.0 }
                } else if b[1] >= 0.0 {
                    norm_cdf(b[0] / s1)
                } else {
                    0.0
                };
                return Ok(ProbEstimate::exact(p));
            }
            let rho = (cov[(0, 1)] / (s1 * s2)).clamp(-1.0, 1.0);
            let p = bivariate_cdf(b[0] / s1, b[1] / s2, rho);
            Ok(ProbEstimate { value: p.clamp(0.0, 1.0), abs_error: 5e-15, n_points: 20 })
        }
        d => {
            let f = sov_factor(&cov, &b)?;
            let mut est = rqmc_mean(d - 1, target_err, seed, |w| f.cdf_value(w));
            est.value = est.value.clamp(0.0, 1.0);
            Ok(est)
        }
    }
}

/// Negative-orthant moment `E[|X_k|^p 1{X <= 0}]` for centered `X ~ g`.
///
/// `p = 0` reduces to the orthant probability. The normalizing constants of
/// the spectral-measure formulas are applied by the caller.
pub fn mvn_orthant_moment(
    g: &GaussianSpec,
    weight_index: usize,
    power: u32,
    target_err: f64,
    seed: u64,
) -> Result<ProbEstimate> {
    let n = g.dim();
    if weight_index >= n {
        return Err(Error::invalid(format!("weight index {weight_index} out of range")));
    }
    if n > MVN_DIM_CAP {
        return Err(Error::DimensionCap { what: "mvn_orthant_moment", dim: n, cap: MVN_DIM_CAP });
    }
    if !(target_err > 0.0) {
        return Err(Error::invalid("target_err must be positive"));
    }
    if g.mean.amax() != 0.0 {
        return Err(Error::invalid("orthant moments are defined for centered laws"));
    }
    let zeros = vec![0.0; n];
    if power == 0 {
        return mvn_cdf(&zeros, g, target_err, seed);
    }
    if n == 1 {
        // sigma^p 2^{(p-1)/2} Gamma((p+1)/2) / sqrt(2 pi)
        let sd = g.cov[(0, 0)].sqrt();
        let p = power as f64;
        let val = sd.powf(p) * 2.0f64.powf((p - 1.0) / 2.0) * gamma((p + 1.0) / 2.0) / SQRT_2PI;
        return Ok(ProbEstimate::exact(val));
    }
    let f = sov_factor(&g.cov, &zeros)?;
    let mut est =
        rqmc_mean(n, target_err, seed, |w| f.moment_value(w, weight_index, power as i32));
    est.value = est.value.max(0.0);
    Ok(est)
}

/// Log of the orthant moment, for use inside log-density assemblies.
pub(crate) fn ln_mvn_orthant_moment(
    g: &GaussianSpec,
    weight_index: usize,
    power: u32,
    target_err: f64,
    seed: u64,
) -> Result<f64> {
    let est = mvn_orthant_moment(g, weight_index, power, target_err, seed)?;
    Ok(if est.value > 0.0 { est.value.ln() } else { f64::NEG_INFINITY })
}

/// Schur-complement pair of a Gaussian conditioning: the regression matrix
/// `Sigma_{B^c B} Sigma_B^{-1}` and the conditional covariance
/// `Sigma_{B^c | B}`.
pub fn conditional_gaussian(
    g: &GaussianSpec,
    b: &ComponentSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = g.dim();
    if b.ambient_dim() != m {
        return Err(Error::invalid("component set dimension mismatch"));
    }
    let bi: Vec<usize> = b.members().collect();
    let ci: Vec<usize> = b.complement_members();
    let sigma_b = g.cov.select_rows(bi.as_slice()).select_columns(bi.as_slice());
    if ci.is_empty() {
        return Ok((DMatrix::zeros(0, bi.len()), DMatrix::zeros(0, 0)));
    }
    let sigma_cb = g.cov.select_rows(ci.as_slice()).select_columns(bi.as_slice());
    let sigma_c = g.cov.select_rows(ci.as_slice()).select_columns(ci.as_slice());

    let (l, _) = cholesky_with_jitter(&sigma_b).map_err(|e| {
        Error::NotFactorizable(format!("conditioning block Sigma_B is singular: {e}"))
    })?;
    let chol = Cholesky::<f64, Dyn>::pack_dirty(l);
    // regression R = Sigma_{cB} Sigma_B^{-1}  <=>  R' = Sigma_B^{-1} Sigma_{Bc}
    let regression = chol.solve(&sigma_cb.transpose()).transpose();
    let mut cond = sigma_c - &regression * sigma_cb.transpose();
    // Symmetrize roundoff.
    for i in 0..cond.nrows() {
        for j in (i + 1)..cond.ncols() {
            let v = 0.5 * (cond[(i, j)] + cond[(j, i)]);
            cond[(i, j)] = v;
            cond[(j, i)] = v;
        }
    }
    Ok((regression, cond))
}

/// Bivariate standard normal CDF `Pr(X <= h, Y <= k)` with correlation `rho`
/// (Drezner-Wesolowsky / Genz hybrid rule, absolute error below 5e-15).
pub fn bivariate_cdf(h: f64, k: f64, rho: f64) -> f64 {
    // Genz's BVND computes the upper-orthant probability.
    bvnd_upper(-h, -k, rho)
}

/// Pr(X > dh, Y > dk) for standard bivariate normal with correlation r.
fn bvnd_upper(dh: f64, dk: f64, r: f64) -> f64 {
    const TWOPI: f64 = 6.283185307179586;
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    if dh == f64::INFINITY || dk == f64::INFINITY {
        return 0.0;
    }
    if dh == f64::NEG_INFINITY {
        return if dk == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-dk) };
    }
    if dk == f64::NEG_INFINITY {
        return norm_cdf(-dh);
    }

    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for i in 0..w.len() {
                for is in [-1.0f64, 1.0] {
                    let sn = (asr * (is * x[i] + 1.0) / 2.0).sin();
                    bvn += w[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn = bvn * asr / (2.0 * TWOPI);
        }
        bvn + norm_cdf(-h) * norm_cdf(-k)
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let ass = (1.0 - r) * (1.0 + r);
            let mut a = ass.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / ass + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - ass) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * ass * ass / 5.0);
            }
            if -hk < 100.0 {
                let b = bs.sqrt();
                bvn -= (-hk / 2.0).exp() * TWOPI.sqrt() * norm_cdf(-b / a) * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for i in 0..w.len() {
                for is in [-1.0f64, 1.0] {
                    let xs = (a * (is * x[i] + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        bvn += a * w[i]
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / TWOPI;
        }
        if r > 0.0 {
            bvn + norm_cdf(-h.max(k))
        } else {
            let mut v = -bvn;
            if k > h {
                v += norm_cdf(k) - norm_cdf(h);
            }
            v
        }
    }
}

const GL6_W: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const GL6_X: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const GL12_W: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const GL12_X: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const GL20_W: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410906,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183821,
    0.1491729864726037,
    0.1527533871307259,
];
const GL20_X: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154196,
    0.2277858511416451,
    0.07652652113349733,
];

/// Log-CDF of a (possibly multivariate) centered Gaussian at the given upper
/// bounds; -inf when the estimate underflows to zero. Dimensions up to
/// [`smalldim::MAX_NESTED_DIM`] take the deterministic quadrature path; the
/// RQMC estimator serves the rest.
pub(crate) fn ln_mvn_cdf(
    upper: &[f64],
    cov: &DMatrix<f64>,
    target_err: f64,
    seed: u64,
) -> Result<f64> {
    match upper.len() {
        0 => Ok(0.0),
        1 => {
            let sd = cov[(0, 0)].sqrt();
            Ok(crate::numeric::ln_norm_cdf(upper[0] / sd))
        }
        d if d <= smalldim::MAX_NESTED_DIM => {
            let p = smalldim::mvn_cdf_det(upper, cov);
            Ok(if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        }
        _ => {
            let spec = GaussianSpec::centered(cov.clone())?;
            let est = mvn_cdf(upper, &spec, target_err, seed)?;
            Ok(if est.value > 0.0 { est.value.ln() } else { f64::NEG_INFINITY })
        }
    }
}

#[allow(unused)]
pub(crate) fn ln_norm_pdf_scaled(x: f64, sd: f64) -> f64 {
    ln_norm_pdf(x / sd) - sd.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn corr2(rho: f64) -> GaussianSpec {
        GaussianSpec::centered(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap()
    }

    #[test]
    fn univariate_half() {
        let g = GaussianSpec::centered(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let est = mvn_cdf(&[0.0], &g, 1e-6, 1).unwrap();
        assert_relative_eq!(est.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn bivariate_orthant_matches_sheppard() {
        // Pr(X<=0, Y<=0) = 1/4 + asin(rho)/(2 pi)
        for &rho in &[-0.9f64, -0.5, 0.0, 0.3, 0.5, 0.9] {
            let expected = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
            let est = mvn_cdf(&[0.0, 0.0], &corr2(rho), 1e-6, 7).unwrap();
            assert_relative_eq!(est.value, expected, epsilon = 5e-10);
        }
    }

    #[test]
    fn trivariate_independent_factorizes() {
        let g = GaussianSpec::centered(DMatrix::identity(3, 3)).unwrap();
        let est = mvn_cdf(&[0.0, 1.0, -0.5], &g, 1e-6, 3).unwrap();
        let expected = 0.5 * norm_cdf(1.0) * norm_cdf(-0.5);
        assert!((est.value - expected).abs() < 5e-6, "{} vs {expected}", est.value);
        assert!(est.abs_error < 1e-4);
    }

    #[test]
    fn equicorrelated_quadrivariate_against_reference() {
        // For Sigma = 0.5 I + 0.5 J (rho = 1/2 equicorrelation) the orthant
        // probability has the classical closed form 1/(d+1) at zero bounds.
        let mut cov = DMatrix::from_element(4, 4, 0.5);
        for i in 0..4 {
            cov[(i, i)] = 1.0;
        }
        let g = GaussianSpec::centered(cov).unwrap();
        let est = mvn_cdf(&[0.0; 4], &g, 1e-7, 11).unwrap();
        assert!((est.value - 0.2).abs() < 5e-6, "{} vs 0.2", est.value);
    }

    #[test]
    fn infinite_bounds() {
        let g = corr2(0.5);
        let est = mvn_cdf(&[f64::INFINITY, f64::INFINITY], &g, 1e-6, 1).unwrap();
        assert_eq!(est.value, 1.0);
        let est = mvn_cdf(&[f64::NEG_INFINITY, 1.0], &g, 1e-6, 1).unwrap();
        assert_eq!(est.value, 0.0);
        let est = mvn_cdf(&[f64::INFINITY, 0.0], &g, 1e-6, 1).unwrap();
        assert_relative_eq!(est.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn monotone_in_bounds() {
        let g = corr2(0.4);
        let lo = mvn_cdf(&[0.0, 0.2], &g, 1e-7, 5).unwrap();
        let hi = mvn_cdf(&[0.5, 0.7], &g, 1e-7, 5).unwrap();
        assert!(hi.value + hi.abs_error >= lo.value - lo.abs_error);
    }

    #[test]
    fn same_seed_bit_identical() {
        let mut cov = DMatrix::from_element(3, 3, 0.3);
        for i in 0..3 {
            cov[(i, i)] = 1.0;
        }
        let g = GaussianSpec::centered(cov).unwrap();
        let a = mvn_cdf(&[0.1, -0.2, 0.4], &g, 1e-7, 42).unwrap();
        let b = mvn_cdf(&[0.1, -0.2, 0.4], &g, 1e-7, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn orthant_moment_univariate_closed_form() {
        let g = GaussianSpec::centered(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let est = mvn_orthant_moment(&g, 0, 1, 1e-7, 1).unwrap();
        assert_relative_eq!(est.value, 1.0 / SQRT_2PI, max_relative = 1e-12);
        let est = mvn_orthant_moment(&g, 0, 0, 1e-7, 1).unwrap();
        assert_relative_eq!(est.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn orthant_moment_independent_bivariate() {
        // E[|Y_1| 1{Y <= 0}] = 0.5 / sqrt(2 pi) under independence.
        let g = GaussianSpec::centered(DMatrix::identity(2, 2)).unwrap();
        let est = mvn_orthant_moment(&g, 0, 1, 1e-7, 9).unwrap();
        assert!((est.value - 0.5 / SQRT_2PI).abs() < 1e-5, "{}", est.value);
    }

    #[test]
    fn moment_p0_equals_cdf() {
        let mut cov = DMatrix::from_element(3, 3, 0.4);
        for i in 0..3 {
            cov[(i, i)] = 1.0;
        }
        let g = GaussianSpec::centered(cov).unwrap();
        let a = mvn_orthant_moment(&g, 1, 0, 1e-7, 4).unwrap();
        let b = mvn_cdf(&[0.0; 3], &g, 1e-7, 4).unwrap();
        assert!((a.value - b.value).abs() <= a.abs_error + b.abs_error + 1e-9);
    }

    #[test]
    fn conditional_identity_covariance() {
        let g = GaussianSpec::centered(DMatrix::identity(3, 3)).unwrap();
        let b = ComponentSet::from_members(&[0], 3).unwrap();
        let (reg, cond) = conditional_gaussian(&g, &b).unwrap();
        assert_eq!(reg, DMatrix::zeros(2, 1));
        assert_eq!(cond, DMatrix::identity(2, 2));
    }

    #[test]
    fn conditional_hand_schur() {
        let g = corr2(0.5);
        let b = ComponentSet::from_members(&[0], 2).unwrap();
        let (reg, cond) = conditional_gaussian(&g, &b).unwrap();
        assert_relative_eq!(reg[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(cond[(0, 0)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn conditional_full_set_degenerate() {
        let g = corr2(0.3);
        let b = ComponentSet::full(2);
        let (reg, cond) = conditional_gaussian(&g, &b).unwrap();
        assert_eq!(reg.nrows(), 0);
        assert_eq!(cond.nrows(), 0);
    }

    #[test]
    fn dimension_cap_enforced() {
        let g = GaussianSpec::centered(DMatrix::identity(26, 26)).unwrap();
        assert!(matches!(
            mvn_cdf(&[0.0; 26], &g, 1e-6, 1),
            Err(Error::DimensionCap { .. })
        ));
    }

    #[test]
    fn jitter_rescues_near_singular() {
        // Coincident-site covariance: rank deficient, rescued by jitter.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (l, jit) = cholesky_with_jitter(&cov).unwrap();
        assert!(jit > 0.0);
        assert!(l[(0, 0)] > 0.0);
    }
}
