//! The spectral-vector families generating the max-stable models.
//!
//! Three kinds are supported, each normalized so the tail-dependence function
//! has unit Frechet margins:
//!
//! - **Gaussian**: `U = sqrt(2 pi) T` with `T` a unit-variance Gaussian
//!   vector, so `E[U_j^+] = 1` holds analytically;
//! - **Log-normal**: `ln U = eps - nu` with `nu_i = Var(eps_i)/2`, so
//!   `E[U_j] = 1` (Brown-Resnick / geometric-Gaussian structure);
//! - **Clustered Archimedean**: independent sub-vectors, each coupled by a
//!   Gumbel or Clayton copula with mean-one log-normal, Weibull or Frechet
//!   margins.
//!
//! A model exposes the kernel
//! `lambda(gamma) = Pr(U_{B^c} <= z_{B^c} gamma | U_B = z_B gamma) f_{U_B}(z_B gamma)`
//! through a per-`(B, z)` context that the `mu` strategies integrate.

pub mod archimedean;
mod theta;

pub use archimedean::{CopulaFamily, MarginFamily, PSI_DERIV_ORDER_CAP};
pub use theta::{ThetaParam, ThetaVector, Transform};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::combinatorics::ComponentSet;
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_with_jitter, ln_mvn_cdf};
use crate::numeric::{ln_norm_cdf, LN_2PI};
use crate::spatial::{correlation_matrix, MaternParams, SiteSet};

/// Tolerance/seed pair for the multivariate-normal calls made inside kernel
/// evaluations. These are internal quadrature controls, not statistical
/// parameters; the default keeps the kernels deterministic.
#[derive(Clone, Copy, Debug)]
pub struct MvnParams {
    pub target_err: f64,
    pub seed: u64,
}

impl Default for MvnParams {
    fn default() -> Self {
        MvnParams { target_err: 1e-6, seed: 0x5EED }
    }
}

/// One cluster of the clustered Archimedean family.
#[derive(Clone, Debug)]
pub struct ArchimedeanClusterSpec {
    pub members: ComponentSet,
    pub copula: CopulaFamily,
    pub margin: MarginFamily,
}

impl ArchimedeanClusterSpec {
    pub fn new(members: ComponentSet, copula: CopulaFamily, margin: MarginFamily) -> Result<Self> {
        copula.validate()?;
        margin.validate()?;
        Ok(ArchimedeanClusterSpec { members, copula, margin })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct GaussianSpectral {
    /// Covariance `2 pi * correlation`.
    pub cov: DMatrix<f64>,
    /// Lower Cholesky factor (jittered if needed), for sampling.
    chol: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct LogNormalSpectral {
    /// Covariance of the Gaussian exponent `eps`.
    pub cov: DMatrix<f64>,
    /// `nu_i = Var(eps_i)/2`, the mean-one correction.
    pub nu: DVector<f64>,
    chol: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct ClusteredSpectral {
    pub clusters: Vec<ArchimedeanClusterSpec>,
    m: usize,
}

#[derive(Clone, Debug)]
pub(crate) enum ModelInner {
    Gaussian(GaussianSpectral),
    LogNormal(LogNormalSpectral),
    Clustered(ClusteredSpectral),
}

/// A spectral law for `U`, the single object every `mu`/likelihood
/// evaluation consumes. Immutable after construction.
#[derive(Clone, Debug)]
pub struct SpectralModel {
    pub(crate) inner: ModelInner,
}

impl SpectralModel {
    /// Gaussian spectral vector over spatial sites: covariance
    /// `2 pi * rho(d(i,j))` with the Whittle-Matern correlation.
    pub fn gaussian_from_sites(sites: &SiteSet, p: &MaternParams) -> Result<Self> {
        let (corr, _coincident) = correlation_matrix(sites, p)?;
        Self::gaussian_from_correlation(corr)
    }

    /// Gaussian spectral vector from an explicit correlation matrix.
    pub fn gaussian_from_correlation(corr: DMatrix<f64>) -> Result<Self> {
        let m = corr.nrows();
        for i in 0..m {
            if (corr[(i, i)] - 1.0).abs() > 1e-10 {
                return Err(Error::invalid("correlation matrix must have unit diagonal"));
            }
        }
        let cov = corr * (2.0 * std::f64::consts::PI);
        let (chol, _) = cholesky_with_jitter(&cov)?;
        Ok(SpectralModel { inner: ModelInner::Gaussian(GaussianSpectral { cov, chol }) })
    }

    /// Log-normal spectral vector `ln U = eps - Var(eps)/2` from the
    /// covariance of `eps`. Zero-variance components are rejected: the theory
    /// requires an absolutely continuous law.
    pub fn lognormal_from_cov(cov_eps: DMatrix<f64>) -> Result<Self> {
        let m = cov_eps.nrows();
        if cov_eps.ncols() != m || m == 0 {
            return Err(Error::invalid("covariance must be square and nonempty"));
        }
        for i in 0..m {
            if !(cov_eps[(i, i)] > 0.0) {
                return Err(Error::invalid(
                    "degenerate spectral law: every component of eps needs positive variance",
                ));
            }
        }
        let (chol, _) = cholesky_with_jitter(&cov_eps)?;
        let nu = DVector::from_fn(m, |i, _| cov_eps[(i, i)] / 2.0);
        Ok(SpectralModel { inner: ModelInner::LogNormal(LogNormalSpectral { cov: cov_eps, nu, chol }) })
    }

    /// Clustered Archimedean spectral vector; the cluster member sets must
    /// partition `{0..m}`.
    pub fn clustered(specs: Vec<ArchimedeanClusterSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("need at least one cluster"));
        }
        let m = specs[0].members.ambient_dim();
        let mut union = 0u32;
        for s in &specs {
            s.copula.validate()?;
            s.margin.validate()?;
            if s.members.ambient_dim() != m {
                return Err(Error::invalid("clusters have inconsistent ambient dimension"));
            }
            if union & s.members.mask() != 0 {
                return Err(Error::invalid("clusters overlap"));
            }
            union |= s.members.mask();
        }
        if union != ((1u64 << m) - 1) as u32 {
            return Err(Error::invalid("clusters do not cover the component set"));
        }
        Ok(SpectralModel { inner: ModelInner::Clustered(ClusteredSpectral { clusters: specs, m }) })
    }

    pub fn dim(&self) -> usize {
        match &self.inner {
            ModelInner::Gaussian(g) => g.cov.nrows(),
            ModelInner::LogNormal(l) => l.cov.nrows(),
            ModelInner::Clustered(c) => c.m,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.inner {
            ModelInner::Gaussian(_) => "gaussian",
            ModelInner::LogNormal(_) => "lognormal",
            ModelInner::Clustered(_) => "clustered",
        }
    }

    /// Marginal restriction to the components of `b`, reindexed to
    /// `0..b.len()`. Used by the partition-composite and pairwise
    /// likelihoods.
    pub fn restrict(&self, b: &ComponentSet) -> Result<SpectralModel> {
        if b.ambient_dim() != self.dim() {
            return Err(Error::invalid("restriction set has wrong ambient dimension"));
        }
        let idx: Vec<usize> = b.members().collect();
        match &self.inner {
            ModelInner::Gaussian(g) => {
                let sub = g.cov.select_rows(idx.as_slice()).select_columns(idx.as_slice())
                    / (2.0 * std::f64::consts::PI);
                Self::gaussian_from_correlation(sub)
            }
            ModelInner::LogNormal(l) => {
                let sub = l.cov.select_rows(idx.as_slice()).select_columns(idx.as_slice());
                Self::lognormal_from_cov(sub)
            }
            ModelInner::Clustered(c) => {
                let new_m = idx.len();
                let pos_of: std::collections::HashMap<usize, usize> =
                    idx.iter().enumerate().map(|(new, &old)| (old, new)).collect();
                let mut specs = Vec::new();
                for cl in &c.clusters {
                    let kept: Vec<usize> =
                        cl.members.members().filter_map(|j| pos_of.get(&j).copied()).collect();
                    if !kept.is_empty() {
                        specs.push(ArchimedeanClusterSpec {
                            members: ComponentSet::from_members(&kept, new_m)?,
                            copula: cl.copula,
                            margin: cl.margin,
                        });
                    }
                }
                Self::clustered(specs)
            }
        }
    }

    /// Prepare the kernel context for `lambda(gamma; B, z)`. The context
    /// owns every `(B, z)`-dependent factorization so repeated gamma
    /// evaluations are cheap.
    pub fn kernel_ctx(&self, b: &ComponentSet, z: &[f64], mvn: MvnParams) -> Result<KernelCtx> {
        if b.ambient_dim() != self.dim() || z.len() != self.dim() {
            return Err(Error::invalid("kernel: dimension mismatch between model, B and z"));
        }
        if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("kernel: z must be strictly positive and finite"));
        }
        match &self.inner {
            ModelInner::Gaussian(g) => GaussianKernelCtx::new(g, b, z, mvn).map(KernelCtx::Gaussian),
            ModelInner::LogNormal(l) => {
                LogNormalKernelCtx::new(l, b, z, mvn).map(KernelCtx::LogNormal)
            }
            ModelInner::Clustered(c) => {
                ClusteredKernelCtx::new(c, b, z).map(KernelCtx::Clustered)
            }
        }
    }

    /// `ln lambda(gamma; B, z)` for every nonempty subset `B` at once,
    /// indexed by the subset bitmask (entry 0 is unused). The clustered kind
    /// shares per-cluster tables across subsets; the Gaussian kinds fall back
    /// to per-subset contexts.
    pub fn ln_lambda_all_masks(&self, gamma: f64, z: &[f64], mvn: MvnParams) -> Result<Vec<f64>> {
        let bulk = self.bulk_kernel(z, mvn)?;
        let mut out = vec![f64::NEG_INFINITY; 1 << self.dim()];
        bulk.eval(gamma, &mut out);
        Ok(out)
    }

    /// Prepare a bulk kernel over all subsets for repeated gamma
    /// evaluations; factorizations and scratch buffers are allocated once.
    pub fn bulk_kernel(&self, z: &[f64], mvn: MvnParams) -> Result<BulkKernel> {
        let m = self.dim();
        let b_full = ComponentSet::full(m);
        if z.len() != m {
            return Err(Error::invalid("bulk kernel: dimension mismatch"));
        }
        if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("bulk kernel: z must be strictly positive and finite"));
        }
        match &self.inner {
            ModelInner::Clustered(c) => {
                // Independence copula with Frechet margins (the logistic
                // family) collapses to per-component closed forms; the
                // simulated-likelihood path leans hard on this case.
                if let [cl] = c.clusters.as_slice() {
                    if let (CopulaFamily::Gumbel { theta }, MarginFamily::Frechet { alpha }) =
                        (cl.copula, cl.margin)
                    {
                        if theta == 1.0 {
                            let ln_scale = -crate::numeric::ln_gamma(1.0 - 1.0 / alpha);
                            return Ok(BulkKernel {
                                m,
                                inner: BulkInner::Logistic {
                                    alpha,
                                    ln_scale,
                                    ln_z: z.iter().map(|v| v.ln()).collect(),
                                    scratch: std::cell::RefCell::new(vec![0.0; 2 * m]),
                                },
                            });
                        }
                    }
                }
                let clusters = c
                    .clusters
                    .iter()
                    .map(|cl| {
                        let members: Vec<usize> = cl.members.members().collect();
                        let nm = members.len();
                        PreparedCluster {
                            z: members.iter().map(|&j| z[j]).collect(),
                            members,
                            copula: cl.copula,
                            margin: cl.margin,
                            table: std::cell::RefCell::new(vec![f64::NEG_INFINITY; 1 << nm]),
                            lnj: std::cell::RefCell::new(vec![0.0; nm]),
                        }
                    })
                    .collect();
                Ok(BulkKernel { m, inner: BulkInner::Clustered { clusters } })
            }
            _ => {
                let mut ctxs = Vec::with_capacity((1 << m) - 1);
                for mask in 1u32..(1u32 << m) {
                    let b = ComponentSet::from_mask(mask, m)?;
                    ctxs.push(self.kernel_ctx(&b, z, mvn)?);
                }
                let _ = b_full;
                Ok(BulkKernel { m, inner: BulkInner::Generic { ctxs } })
            }
        }
    }

    /// Partial expectation `E[(U_j - a)^+]` of one margin; the truncation
    /// diagnostic of the max-stable sampler.
    pub fn partial_expectation(&self, j: usize, a: f64) -> f64 {
        match &self.inner {
            ModelInner::Gaussian(g) => {
                let sd = g.cov[(j, j)].sqrt();
                if a <= 0.0 {
                    return sd / crate::numeric::SQRT_2PI + a.abs();
                }
                let t = a / sd;
                sd * crate::numeric::norm_pdf(t) - a * crate::numeric::norm_cdf(-t)
            }
            ModelInner::LogNormal(l) => {
                MarginFamily::LogNormal { alpha: l.cov[(j, j)].sqrt() }.partial_expectation(a)
            }
            ModelInner::Clustered(c) => {
                let cl = c.clusters.iter().find(|cl| cl.members.contains(j)).expect("covered");
                cl.margin.partial_expectation(a)
            }
        }
    }

    /// One i.i.d. draw of `U` written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match &self.inner {
            ModelInner::Gaussian(g) => {
                let m = g.cov.nrows();
                let normals: Vec<f64> =
                    (0..m).map(|_| rand_distr::StandardNormal.sample_from(rng)).collect();
                for i in 0..m {
                    out[i] = (0..=i).map(|k| g.chol[(i, k)] * normals[k]).sum();
                }
            }
            ModelInner::LogNormal(l) => {
                let m = l.cov.nrows();
                let normals: Vec<f64> =
                    (0..m).map(|_| rand_distr::StandardNormal.sample_from(rng)).collect();
                for i in 0..m {
                    let e: f64 = (0..=i).map(|k| l.chol[(i, k)] * normals[k]).sum();
                    out[i] = (e - l.nu[i]).exp();
                }
            }
            ModelInner::Clustered(c) => {
                for cl in &c.clusters {
                    let w = cl.copula.sample_frailty(rng);
                    for j in cl.members.members() {
                        let e: f64 = -(1.0f64 - rng.random::<f64>()).ln();
                        // Frailty construction: X = psi(E/W) is the copula
                        // uniform, then the mean-one margin quantile.
                        let x = cl.copula.ln_psi(e / w).exp();
                        out[j] = cl.margin.quantile(x.clamp(1e-300, 1.0 - 1e-16));
                    }
                }
            }
        }
    }

    /// `count` i.i.d. draws, one per row; row `i` uses an independent
    /// substream of `seed`, so the result does not depend on how callers
    /// partition the work.
    pub fn sample_spectral(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let m = self.dim();
        let mut out = DMatrix::zeros(count, m);
        let mut row = vec![0.0; m];
        for i in 0..count {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            self.sample_into(&mut rng, &mut row);
            for j in 0..m {
                out[(i, j)] = row[j];
            }
        }
        Ok(out)
    }

    pub(crate) fn gaussian_cov(&self) -> Option<&DMatrix<f64>> {
        match &self.inner {
            ModelInner::Gaussian(g) => Some(&g.cov),
            _ => None,
        }
    }

    pub(crate) fn lognormal_parts(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        match &self.inner {
            ModelInner::LogNormal(l) => Some((&l.cov, &l.nu)),
            _ => None,
        }
    }

    pub(crate) fn clusters(&self) -> Option<&[ArchimedeanClusterSpec]> {
        match &self.inner {
            ModelInner::Clustered(c) => Some(&c.clusters),
            _ => None,
        }
    }
}

// Small helper: rand_distr's Distribution::sample with the argument order
// flipped so type inference stays local.
trait SampleFrom {
    fn sample_from<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}
impl SampleFrom for rand_distr::StandardNormal {
    fn sample_from<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Distribution::sample(self, rng)
    }
}

/// The conditional-probability-times-density kernel
/// `lambda(gamma) = Pr(U_{B^c} <= z_{B^c} gamma | U_B = z_B gamma) f_{U_B}(z_B gamma)`.
///
/// Underflow yields exact zero (`-inf` in logs), never a negative value.
pub fn lambda_kernel(
    model: &SpectralModel,
    gamma: f64,
    b: &ComponentSet,
    z: &[f64],
) -> Result<f64> {
    let ctx = model.kernel_ctx(b, z, MvnParams::default())?;
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    Ok(ctx.ln_lambda(gamma).exp())
}

/// Signed k-th derivative of an Archimedean generator (public operation; the
/// kernels use the log-space form internally).
pub fn psi_derivatives(copula: &CopulaFamily, order: usize, t: f64) -> Result<f64> {
    copula.validate()?;
    if t < 0.0 {
        return Err(Error::invalid("generator argument must be nonnegative"));
    }
    copula.psi_derivative(order, t)
}

/// Prepared per-`(model, B, z)` kernel evaluator.
pub enum KernelCtx {
    Gaussian(GaussianKernelCtx),
    LogNormal(LogNormalKernelCtx),
    Clustered(ClusteredKernelCtx),
}

impl KernelCtx {
    /// `ln lambda(gamma)`; `-inf` when the kernel underflows.
    pub fn ln_lambda(&self, gamma: f64) -> f64 {
        match self {
            KernelCtx::Gaussian(c) => c.ln_lambda(gamma),
            KernelCtx::LogNormal(c) => c.ln_lambda(gamma),
            KernelCtx::Clustered(c) => c.ln_lambda(gamma),
        }
    }
}

/// Conditional CDF evaluator shared by the two Gaussian-type kernels:
/// dimension 0 and 1 are exact, dimension 2 uses the bivariate rule, higher
/// dimensions the QMC estimator.
struct CondCdf {
    dim: usize,
    sds: Vec<f64>,
    corr_or_cov: DMatrix<f64>,
    mvn: MvnParams,
}

impl CondCdf {
    fn new(cond_cov: DMatrix<f64>, mvn: MvnParams) -> Self {
        let dim = cond_cov.nrows();
        let sds: Vec<f64> = (0..dim).map(|i| cond_cov[(i, i)].max(1e-300).sqrt()).collect();
        CondCdf { dim, sds, corr_or_cov: cond_cov, mvn }
    }

    fn ln_cdf(&self, upper: &[f64]) -> f64 {
        match self.dim {
            0 => 0.0,
            1 => ln_norm_cdf(upper[0] / self.sds[0]),
            _ => ln_mvn_cdf(upper, &self.corr_or_cov, self.mvn.target_err, self.mvn.seed)
                .unwrap_or(f64::NEG_INFINITY),
        }
    }
}

/// Gaussian kernel: conditional Gaussian CDF times a Gaussian density.
pub struct GaussianKernelCtx {
    card_b: usize,
    /// z_B' Sigma_B^{-1} z_B
    a2: f64,
    /// -|B|/2 ln 2pi - 1/2 ln det Sigma_B
    ln_density_const: f64,
    /// w = z_{B^c} - Sigma_{B^c B} Sigma_B^{-1} z_B
    w: Vec<f64>,
    cond: CondCdf,
}

impl GaussianKernelCtx {
    fn new(g: &GaussianSpectral, b: &ComponentSet, z: &[f64], mvn: MvnParams) -> Result<Self> {
        let bi: Vec<usize> = b.members().collect();
        let ci: Vec<usize> = b.complement_members();
        let sigma_b = g.cov.select_rows(bi.as_slice()).select_columns(bi.as_slice());
        let (l, _) = cholesky_with_jitter(&sigma_b)?;
        let ln_det_half: f64 = (0..bi.len()).map(|i| l[(i, i)].ln()).sum();
        let chol = Cholesky::<f64, Dyn>::pack_dirty(l);

        let z_b = DVector::from_iterator(bi.len(), bi.iter().map(|&j| z[j]));
        let sol = chol.solve(&z_b);
        let a2 = z_b.dot(&sol);

        let (w, cond_cov) = if ci.is_empty() {
            (Vec::new(), DMatrix::zeros(0, 0))
        } else {
            let sigma_cb = g.cov.select_rows(ci.as_slice()).select_columns(bi.as_slice());
            let reg_t = chol.solve(&sigma_cb.transpose()); // Sigma_B^{-1} Sigma_{B c}
            let w: Vec<f64> = ci
                .iter()
                .enumerate()
                .map(|(r, &j)| z[j] - (&sigma_cb.row(r) * &sol)[(0, 0)])
                .collect();
            let mut cond = g.cov.select_rows(ci.as_slice()).select_columns(ci.as_slice())
                - &sigma_cb * &reg_t;
            for i in 0..cond.nrows() {
                for jj in (i + 1)..cond.ncols() {
                    let v = 0.5 * (cond[(i, jj)] + cond[(jj, i)]);
                    cond[(i, jj)] = v;
                    cond[(jj, i)] = v;
                }
            }
            (w, cond)
        };

        Ok(GaussianKernelCtx {
            card_b: bi.len(),
            a2,
            ln_density_const: -(bi.len() as f64) / 2.0 * LN_2PI - ln_det_half,
            w,
            cond: CondCdf::new(cond_cov, mvn),
        })
    }

    fn ln_lambda(&self, gamma: f64) -> f64 {
        let _ = self.card_b;
        let upper: Vec<f64> = self.w.iter().map(|wi| wi * gamma).collect();
        self.cond.ln_cdf(&upper) + self.ln_density_const - 0.5 * gamma * gamma * self.a2
    }
}

/// Log-normal kernel: the quadratic form in `ln gamma` is precomputed.
pub struct LogNormalKernelCtx {
    card_b: usize,
    sum_ln_z_b: f64,
    /// -|B|/2 ln 2pi - 1/2 ln det Sigma_B
    ln_density_const: f64,
    /// quadratic form of w_B + x e_B in Sigma_B^{-1}: qa + 2 qb x + qc x^2
    qa: f64,
    qb: f64,
    qc: f64,
    /// d0 = (ln z + nu)_{B^c} - R (ln z + nu)_B,  c = e_{B^c} - R e_B
    d0: Vec<f64>,
    cvec: Vec<f64>,
    cond: CondCdf,
}

impl LogNormalKernelCtx {
    fn new(l: &LogNormalSpectral, b: &ComponentSet, z: &[f64], mvn: MvnParams) -> Result<Self> {
        let bi: Vec<usize> = b.members().collect();
        let ci: Vec<usize> = b.complement_members();
        let sigma_b = l.cov.select_rows(bi.as_slice()).select_columns(bi.as_slice());
        let (lf, _) = cholesky_with_jitter(&sigma_b)?;
        let ln_det_half: f64 = (0..bi.len()).map(|i| lf[(i, i)].ln()).sum();
        let chol = Cholesky::<f64, Dyn>::pack_dirty(lf);

        let w_b = DVector::from_iterator(bi.len(), bi.iter().map(|&j| z[j].ln() + l.nu[j]));
        let ones = DVector::from_element(bi.len(), 1.0);
        let si_w = chol.solve(&w_b);
        let si_e = chol.solve(&ones);
        let qa = w_b.dot(&si_w);
        let qb = ones.dot(&si_w);
        let qc = ones.dot(&si_e);

        let (d0, cvec, cond_cov) = if ci.is_empty() {
            (Vec::new(), Vec::new(), DMatrix::zeros(0, 0))
        } else {
            let sigma_cb = l.cov.select_rows(ci.as_slice()).select_columns(bi.as_slice());
            let reg_t = chol.solve(&sigma_cb.transpose());
            let d0: Vec<f64> = ci
                .iter()
                .enumerate()
                .map(|(r, &j)| z[j].ln() + l.nu[j] - (&sigma_cb.row(r) * &si_w)[(0, 0)])
                .collect();
            let cvec: Vec<f64> = ci
                .iter()
                .enumerate()
                .map(|(r, _)| 1.0 - (&sigma_cb.row(r) * &si_e)[(0, 0)])
                .collect();
            let mut cond = l.cov.select_rows(ci.as_slice()).select_columns(ci.as_slice())
                - &sigma_cb * &reg_t;
            for i in 0..cond.nrows() {
                for jj in (i + 1)..cond.ncols() {
                    let v = 0.5 * (cond[(i, jj)] + cond[(jj, i)]);
                    cond[(i, jj)] = v;
                    cond[(jj, i)] = v;
                }
            }
            (d0, cvec, cond)
        };

        Ok(LogNormalKernelCtx {
            card_b: bi.len(),
            sum_ln_z_b: bi.iter().map(|&j| z[j].ln()).sum(),
            ln_density_const: -(bi.len() as f64) / 2.0 * LN_2PI - ln_det_half,
            qa,
            qb,
            qc,
            d0,
            cvec,
            cond: CondCdf::new(cond_cov, mvn),
        })
    }

    fn ln_lambda(&self, gamma: f64) -> f64 {
        let x = gamma.ln();
        let quad = self.qa + 2.0 * self.qb * x + self.qc * x * x;
        let ln_density = self.ln_density_const - 0.5 * quad
            - self.sum_ln_z_b
            - self.card_b as f64 * x;
        let upper: Vec<f64> = self.d0.iter().zip(&self.cvec).map(|(d, c)| d + c * x).collect();
        self.cond.ln_cdf(&upper) + ln_density
    }
}

/// Clustered Archimedean kernel: the closed expression inside the clustered
/// `mu` integrand, factored over independent clusters.
pub struct ClusteredKernelCtx {
    clusters: Vec<ClusterKernel>,
}

struct ClusterKernel {
    copula: CopulaFamily,
    margin: MarginFamily,
    /// z values of the cluster members in the exceed set B.
    z_in_b: Vec<f64>,
    /// z values of the remaining cluster members.
    z_out_b: Vec<f64>,
}

impl ClusteredKernelCtx {
    fn new(c: &ClusteredSpectral, b: &ComponentSet, z: &[f64]) -> Result<Self> {
        let clusters = c
            .clusters
            .iter()
            .map(|cl| {
                let mut z_in_b = Vec::new();
                let mut z_out_b = Vec::new();
                for j in cl.members.members() {
                    if b.contains(j) {
                        z_in_b.push(z[j]);
                    } else {
                        z_out_b.push(z[j]);
                    }
                }
                ClusterKernel { copula: cl.copula, margin: cl.margin, z_in_b, z_out_b }
            })
            .collect();
        Ok(ClusteredKernelCtx { clusters })
    }

    fn ln_lambda(&self, gamma: f64) -> f64 {
        let mut total = 0.0;
        for cl in &self.clusters {
            let v = cl.ln_factor(gamma);
            if v == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += v;
        }
        total
    }
}

impl ClusterKernel {
    /// `ln` of this cluster's factor in the integrand: the `|B ∩ P_i|`-th
    /// generator derivative at the summed inverse-generator values, times the
    /// density/Jacobian product over the members in `B`.
    fn ln_factor(&self, gamma: f64) -> f64 {
        let k = self.z_in_b.len();
        let mut t_sum = 0.0f64;
        let mut ln_jac = 0.0f64;
        for &zj in &self.z_in_b {
            let x = gamma * zj;
            let s = self.copula.psi_inv_from_neg_log(self.margin.neg_ln_cdf(x));
            t_sum += s;
            ln_jac += self.margin.ln_pdf(x) - self.copula.ln_abs_psi1(s);
        }
        for &zj in &self.z_out_b {
            t_sum += self.copula.psi_inv_from_neg_log(self.margin.neg_ln_cdf(gamma * zj));
        }
        if !t_sum.is_finite() {
            return f64::NEG_INFINITY;
        }
        // Gumbel derivatives need t > 0; at t = 0 every argument sits at the
        // upper endpoint and the factor degenerates to 0 or 1.
        if k >= 1 && t_sum <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.copula.ln_abs_psi_deriv(k, t_sum) {
            // Signs cancel: psi^(k) carries (-1)^k and the k Jacobian factors
            // 1/psi'(s) carry (-1)^k as well.
            Ok((ln_abs, _sign)) => ln_abs + ln_jac,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Prepared evaluator of `ln lambda(gamma; B, z)` for all subsets `B` at
/// once, with scratch reused across gamma nodes.
pub struct BulkKernel {
    m: usize,
    inner: BulkInner,
}

enum BulkInner {
    Clustered { clusters: Vec<PreparedCluster> },
    /// Fused i.i.d.-Frechet path: `ln lambda(B) = sum_{j in B^c} ln F_j +
    /// sum_{j in B} ln f_j` with one exponential per component.
    Logistic {
        alpha: f64,
        ln_scale: f64,
        ln_z: Vec<f64>,
        scratch: std::cell::RefCell<Vec<f64>>,
    },
    Generic { ctxs: Vec<KernelCtx> },
}

struct PreparedCluster {
    members: Vec<usize>,
    z: Vec<f64>,
    copula: CopulaFamily,
    margin: MarginFamily,
    table: std::cell::RefCell<Vec<f64>>,
    lnj: std::cell::RefCell<Vec<f64>>,
}

impl BulkKernel {
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Fill `out[mask] = ln lambda(gamma; mask)` for every nonempty mask;
    /// `out[0]` is set to `-inf`. `out` must have length `2^m`.
    pub fn eval(&self, gamma: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), 1 << self.m);
        out[0] = f64::NEG_INFINITY;
        match &self.inner {
            BulkInner::Generic { ctxs } => {
                for (mask, slot) in out.iter_mut().enumerate().skip(1) {
                    *slot = ctxs[mask - 1].ln_lambda(gamma);
                }
            }
            BulkInner::Logistic { alpha, ln_scale, ln_z, scratch } => {
                let m = ln_z.len();
                let ln_g = gamma.ln();
                let mut buf = scratch.borrow_mut();
                let (ln_cdf, ln_pdf) = buf.split_at_mut(m);
                let ln_alpha = alpha.ln();
                for j in 0..m {
                    // lx = ln(x/s); F = exp(-exp(-alpha lx)); one exp each
                    let lx = ln_g + ln_z[j] - ln_scale;
                    let nlf = (-alpha * lx).exp();
                    ln_cdf[j] = -nlf;
                    ln_pdf[j] = ln_alpha - ln_scale - (alpha + 1.0) * lx - nlf;
                }
                for (mask, slot) in out.iter_mut().enumerate().skip(1) {
                    let mut t = 0.0;
                    for j in 0..m {
                        t += if mask & (1 << j) != 0 { ln_pdf[j] } else { ln_cdf[j] };
                    }
                    *slot = t;
                }
            }
            BulkInner::Clustered { clusters } => {
                for cl in clusters {
                    cl.fill_table(gamma);
                }
                let tables: Vec<std::cell::Ref<'_, Vec<f64>>> =
                    clusters.iter().map(|c| c.table.borrow()).collect();
                for mask in 1..(1usize << self.m) {
                    let mut total = 0.0;
                    for (ci, cl) in clusters.iter().enumerate() {
                        let mut sub = 0usize;
                        for (i, &j) in cl.members.iter().enumerate() {
                            if mask & (1 << j) != 0 {
                                sub |= 1 << i;
                            }
                        }
                        let v = tables[ci][sub];
                        if v == f64::NEG_INFINITY {
                            total = f64::NEG_INFINITY;
                            break;
                        }
                        total += v;
                    }
                    out[mask] = total;
                }
            }
        }
    }
}

impl PreparedCluster {
    /// Rebuild the per-submask factor table at one gamma: the generator
    /// derivative depends on the submask only through its size (one ladder
    /// call), the Jacobian factors through a subset sum.
    fn fill_table(&self, gamma: f64) {
        let nm = self.members.len();
        let mut lnj = self.lnj.borrow_mut();
        let mut t_all = 0.0f64;
        for (i, &zj) in self.z.iter().enumerate() {
            let x = gamma * zj;
            let s = self.copula.psi_inv_from_neg_log(self.margin.neg_ln_cdf(x));
            t_all += s;
            lnj[i] = self.margin.ln_pdf(x) - self.copula.ln_abs_psi1(s);
        }
        let mut table = self.table.borrow_mut();
        let ladder = if t_all.is_finite() && t_all > 0.0 {
            self.copula.ln_abs_psi_deriv_ladder(nm, t_all).ok()
        } else {
            None
        };
        for sub in 0..(1usize << nm) {
            let k = (sub as u32).count_ones() as usize;
            table[sub] = match &ladder {
                Some(lad) => {
                    let mut jac = 0.0;
                    for (i, l) in lnj.iter().enumerate() {
                        if sub & (1 << i) != 0 {
                            jac += l;
                        }
                    }
                    lad[k] + jac
                }
                None if k == 0 && t_all.is_finite() => self.copula.ln_psi(t_all),
                None => f64::NEG_INFINITY,
            };
        }
    }
}
