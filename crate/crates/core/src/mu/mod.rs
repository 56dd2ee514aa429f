//! Evaluation strategies for the exponent-measure derivative
//!
//! `mu(B; z) = int_0^inf gamma^|B| Pr(U_{B^c} <= z_{B^c} gamma | U_B = z_B gamma) f_{U_B}(z_B gamma) dgamma`
//!
//! the atomic quantity of every likelihood in this crate, together with the
//! tail-dependence function `V*` and its exceedance decomposition.
//!
//! Each algorithm variant lives behind the [`MuStrategy`] trait and is
//! registered by name, so configurations and the CLI can select one at
//! runtime:
//!
//! - `quadrature` — the one-dimensional integral under `gamma = u/(1-u)`,
//!   adaptively refined (works for every model kind);
//! - `analytic-gaussian` — the negative-orthant-moment reduction for the
//!   Gaussian kind;
//! - `analytic-lognormal` — the closed factor times a multivariate normal
//!   probability for the Log-normal kind;
//! - `archimedean-quadrature` — the clustered-generator integrand (an alias
//!   of `quadrature` restricted to the clustered kind);
//! - `monte-carlo` — the shared-sample unit-Pareto estimator `mu_S`, the
//!   simulated-likelihood path.
//!
//! Strategies are immutable and `Send + Sync`; evaluations are deterministic
//! given their options and seeds.

mod quadrature;

pub use quadrature::{
    integrate_log, integrate_log_multi, integrate_log_multi_with_edges, integrate_log_on_mesh,
    integrate_log_with_edges, Mesh, QuadOptions, QuadResult,
};

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::combinatorics::ComponentSet;
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_with_jitter, ln_mvn_orthant_moment, mvn_cdf, GaussianSpec};
use crate::numeric::{LogSumExp, LN_2PI};
use crate::spectral::{MvnParams, SpectralModel, ThetaVector};

/// A reusable evaluation plan for repeated `log_mu` calls with the same
/// `(B, z)` but perturbed model parameters: finite-difference gradients hold
/// the plan fixed so both sides see common quadrature panels and seeds.
pub enum MuPlan {
    /// Frozen quadrature mesh in `u`.
    Mesh(Mesh),
    /// The strategy is already deterministic given `(B, z)`.
    Fixed,
}

/// One interchangeable algorithm for `mu(B; z)`.
pub trait MuStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether this strategy can evaluate the given model kind.
    fn supports(&self, model: &SpectralModel) -> bool;

    /// `ln mu(B; z)`; `-inf` when the integral underflows to zero.
    fn log_mu(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<f64>;

    /// Build a plan for common-random-numbers re-evaluation.
    fn plan(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<MuPlan> {
        let _ = (model, b, z);
        Ok(MuPlan::Fixed)
    }

    /// Evaluate under a previously built plan.
    fn log_mu_planned(
        &self,
        model: &SpectralModel,
        b: &ComponentSet,
        z: &[f64],
        plan: &MuPlan,
    ) -> Result<f64> {
        let _ = plan;
        self.log_mu(model, b, z)
    }

    /// `ln mu(B; z)` for every nonempty subset at once, indexed by bitmask
    /// (entry 0 unused). The default loops over subsets; strategies with a
    /// shared structure across subsets override it.
    fn log_mu_all_subsets(&self, model: &SpectralModel, z: &[f64]) -> Result<Vec<f64>> {
        let m = model.dim();
        let mut out = vec![f64::NEG_INFINITY; 1 << m];
        for mask in 1u32..(1u32 << m) {
            let b = ComponentSet::from_mask(mask, m)?;
            out[mask as usize] = self.log_mu(model, &b, z)?;
        }
        Ok(out)
    }
}

fn check_inputs(model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<()> {
    if b.ambient_dim() != model.dim() || z.len() != model.dim() {
        return Err(Error::invalid("mu: dimension mismatch between model, B and z"));
    }
    if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("mu: z must be strictly positive and finite"));
    }
    Ok(())
}

fn mismatch(strategy: &'static str, model: &SpectralModel) -> Error {
    Error::StrategyMismatch { strategy, model: model.kind_name() }
}

/// Initial quadrature mesh matched to the scale of `z`: log-spaced gamma
/// seed points over the range where any kernel factor can live, merged with
/// a geometric grading into both endpoints of the `u = gamma/(1+gamma)`
/// scale. Extreme observations would otherwise hide their mass inside one
/// endpoint sliver of a fixed mesh.
fn seed_edges_for_z(z: &[f64], depth: usize) -> Vec<f64> {
    let z_min = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let z_max = z.iter().cloned().fold(0.0f64, f64::max);
    let g_lo = (1e-9 / z_max).max(1e-250);
    let g_hi = (1e9 / z_min).min(1e250);
    let mut edges = Vec::with_capacity(2 * depth + 36);
    edges.push(0.0);
    for k in (1..=depth).rev() {
        edges.push(0.5f64.powi(k as i32));
    }
    for k in 1..=depth {
        edges.push(1.0 - 0.5f64.powi(k as i32 + 1));
    }
    edges.push(1.0);
    let steps = 30usize;
    let ratio = (g_hi / g_lo).ln() / steps as f64;
    for i in 0..=steps {
        let g = g_lo * (ratio * i as f64).exp();
        let u = g / (1.0 + g);
        if u > 0.0 && u < 1.0 {
            edges.push(u);
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-300);
    edges
}

// ---------------------------------------------------------------------------
// quadrature strategies
// ---------------------------------------------------------------------------

/// Adaptive 1-D quadrature of the kernel under `gamma = u/(1-u)`.
pub struct QuadratureMu {
    pub quad: QuadOptions,
    pub mvn: MvnParams,
}

impl QuadratureMu {
    pub fn new(quad: QuadOptions, mvn: MvnParams) -> Self {
        QuadratureMu { quad, mvn }
    }

    fn ln_integrand<'c>(
        ctx: &'c crate::spectral::KernelCtx,
        card_b: f64,
    ) -> impl Fn(f64) -> f64 + 'c {
        move |u: f64| {
            if u <= 0.0 || u >= 1.0 {
                return f64::NEG_INFINITY;
            }
            let gamma = u / (1.0 - u);
            // gamma^|B| lambda(gamma) du-Jacobian, all in logs.
            card_b * gamma.ln() + ctx.ln_lambda(gamma) - 2.0 * (1.0 - u).ln()
        }
    }
}

impl MuStrategy for QuadratureMu {
    fn name(&self) -> &'static str {
        "quadrature"
    }

    fn supports(&self, _model: &SpectralModel) -> bool {
        true
    }

    fn log_mu(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<f64> {
        check_inputs(model, b, z)?;
        let ctx = model.kernel_ctx(b, z, self.mvn)?;
        let f = Self::ln_integrand(&ctx, b.len() as f64);
        let edges = seed_edges_for_z(z, self.quad.init_depth);
        Ok(integrate_log_with_edges(&f, &self.quad, edges)?.ln_integral)
    }

    fn plan(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<MuPlan> {
        check_inputs(model, b, z)?;
        let ctx = model.kernel_ctx(b, z, self.mvn)?;
        let f = Self::ln_integrand(&ctx, b.len() as f64);
        let edges = seed_edges_for_z(z, self.quad.init_depth);
        Ok(MuPlan::Mesh(integrate_log_with_edges(&f, &self.quad, edges)?.mesh))
    }

    fn log_mu_planned(
        &self,
        model: &SpectralModel,
        b: &ComponentSet,
        z: &[f64],
        plan: &MuPlan,
    ) -> Result<f64> {
        match plan {
            MuPlan::Mesh(mesh) => {
                check_inputs(model, b, z)?;
                let ctx = model.kernel_ctx(b, z, self.mvn)?;
                let f = Self::ln_integrand(&ctx, b.len() as f64);
                Ok(integrate_log_on_mesh(&f, mesh))
            }
            MuPlan::Fixed => self.log_mu(model, b, z),
        }
    }

    /// All subsets share one adaptive mesh: the per-node kernel work (tables
    /// for the clustered kind, factorized contexts otherwise) is reused
    /// across the `2^m - 1` integrands.
    fn log_mu_all_subsets(&self, model: &SpectralModel, z: &[f64]) -> Result<Vec<f64>> {
        let m = model.dim();
        let b_full = ComponentSet::full(m);
        check_inputs(model, &b_full, z)?;
        let nfun = 1usize << m;
        let cards: Vec<f64> = (0..nfun).map(|mask| (mask as u32).count_ones() as f64).collect();
        let bulk = model.bulk_kernel(z, self.mvn)?;
        let f = |u: f64, out: &mut [f64]| {
            if u <= 0.0 || u >= 1.0 {
                out.fill(f64::NEG_INFINITY);
                return;
            }
            let gamma = u / (1.0 - u);
            bulk.eval(gamma, out);
            let ln_g = gamma.ln();
            let jac = -2.0 * (1.0 - u).ln();
            for mask in 1..nfun {
                out[mask] += cards[mask] * ln_g + jac;
            }
        };
        let edges = seed_edges_for_z(z, self.quad.init_depth);
        integrate_log_multi_with_edges(nfun, &f, &self.quad, edges)
    }
}

/// The clustered-generator integrand of the clustered family. Shares the
/// quadrature engine; registered separately because it only accepts the
/// clustered kind.
pub struct ArchimedeanQuadratureMu(QuadratureMu);

impl ArchimedeanQuadratureMu {
    pub fn new(quad: QuadOptions) -> Self {
        ArchimedeanQuadratureMu(QuadratureMu::new(quad, MvnParams::default()))
    }
}

impl MuStrategy for ArchimedeanQuadratureMu {
    fn name(&self) -> &'static str {
        "archimedean-quadrature"
    }

    fn supports(&self, model: &SpectralModel) -> bool {
        model.kind_name() == "clustered"
    }

    fn log_mu(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<f64> {
        if !self.supports(model) {
            return Err(mismatch(self.name(), model));
        }
        self.0.log_mu(model, b, z)
    }

    fn plan(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<MuPlan> {
        if !self.supports(model) {
            return Err(mismatch(self.name(), model));
        }
        self.0.plan(model, b, z)
    }

    fn log_mu_planned(
        &self,
        model: &SpectralModel,
        b: &ComponentSet,
        z: &[f64],
        plan: &MuPlan,
    ) -> Result<f64> {
        self.0.log_mu_planned(model, b, z, plan)
    }

    fn log_mu_all_subsets(&self, model: &SpectralModel, z: &[f64]) -> Result<Vec<f64>> {
        if !self.supports(model) {
            return Err(mismatch(self.name(), model));
        }
        self.0.log_mu_all_subsets(model, z)
    }
}

// ---------------------------------------------------------------------------
// analytic reductions
// ---------------------------------------------------------------------------

/// Gaussian kind: `mu(B; z)` as a weighted negative-orthant moment of the
/// augmented conditional vector `Y = (V_{B^c|B} + ztilde Lambda, Lambda)`.
///
/// `mu = (2 pi)^{(1-|B|)/2} det(Sigma_B)^{-1/2} ||z_B||^{-(|B|+1)}
///       E[|Y_last|^{|B|} 1{Y <= 0}]`,
/// with `ztilde = (z_{B^c} - Sigma_{B^c B} Sigma_B^{-1} z_B) / ||z_B||` and
/// `||.||` the `Sigma_B^{-1}` norm.
pub struct AnalyticGaussianMu {
    pub mvn: MvnParams,
}

impl MuStrategy for AnalyticGaussianMu {
    fn name(&self) -> &'static str {
        "analytic-gaussian"
    }

    fn supports(&self, model: &SpectralModel) -> bool {
        model.kind_name() == "gaussian"
    }

    fn log_mu(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<f64> {
        check_inputs(model, b, z)?;
        let cov = model.gaussian_cov().ok_or_else(|| mismatch(self.name(), model))?;
        let bi: Vec<usize> = b.members().collect();
        let ci: Vec<usize> = b.complement_members();
        let card_b = bi.len();

        let sigma_b = cov.select_rows(bi.as_slice()).select_columns(bi.as_slice());
        let (l, _) = cholesky_with_jitter(&sigma_b)?;
        let ln_det_half: f64 = (0..card_b).map(|i| l[(i, i)].ln()).sum();
        let chol = Cholesky::<f64, Dyn>::pack_dirty(l);

        let z_b = DVector::from_iterator(card_b, bi.iter().map(|&j| z[j]));
        let si_z = chol.solve(&z_b);
        let a = z_b.dot(&si_z).sqrt();

        let d = ci.len() + 1;
        let mut sigma_y = DMatrix::<f64>::zeros(d, d);
        sigma_y[(d - 1, d - 1)] = 1.0;
        if !ci.is_empty() {
            let sigma_cb = cov.select_rows(ci.as_slice()).select_columns(bi.as_slice());
            let reg_t = chol.solve(&sigma_cb.transpose());
            let cond = cov.select_rows(ci.as_slice()).select_columns(ci.as_slice())
                - &sigma_cb * &reg_t;
            let ztilde: Vec<f64> = ci
                .iter()
                .enumerate()
                .map(|(r, &j)| (z[j] - (&sigma_cb.row(r) * &si_z)[(0, 0)]) / a)
                .collect();
            for r in 0..ci.len() {
                for c in 0..ci.len() {
                    let v = 0.5 * (cond[(r, c)] + cond[(c, r)]) + ztilde[r] * ztilde[c];
                    sigma_y[(r, c)] = v;
                }
                sigma_y[(r, d - 1)] = ztilde[r];
                sigma_y[(d - 1, r)] = ztilde[r];
            }
        }

        // Deterministic nested quadrature for small dimensions; RQMC above.
        let ln_moment = if d <= crate::gaussian::smalldim::MAX_NESTED_DIM {
            let m = crate::gaussian::smalldim::orthant_moment_det(&sigma_y, d - 1, card_b as u32);
            if m > 0.0 {
                m.ln()
            } else {
                f64::NEG_INFINITY
            }
        } else {
            let spec = GaussianSpec::centered(sigma_y)?;
            ln_mvn_orthant_moment(&spec, d - 1, card_b as u32, self.mvn.target_err, self.mvn.seed)?
        };
        Ok((1.0 - card_b as f64) / 2.0 * LN_2PI - ln_det_half - (card_b as f64 + 1.0) * a.ln()
            + ln_moment)
    }
}

/// Log-normal kind: closed factor times a `|B^c|`-dimensional normal
/// probability. Derived from the construction `Y_{B^c} = V_{B^c|B} - c Lambda`
/// with `Lambda ~ N(0, tau^2)`, `tau^2 = (e' Sigma_B^{-1} e)^{-1}`.
pub struct AnalyticLogNormalMu {
    pub mvn: MvnParams,
}

impl MuStrategy for AnalyticLogNormalMu {
    fn name(&self) -> &'static str {
        "analytic-lognormal"
    }

    fn supports(&self, model: &SpectralModel) -> bool {
        model.kind_name() == "lognormal"
    }

    fn log_mu(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<f64> {
        check_inputs(model, b, z)?;
        let (cov, nu) = model.lognormal_parts().ok_or_else(|| mismatch(self.name(), model))?;
        let bi: Vec<usize> = b.members().collect();
        let ci: Vec<usize> = b.complement_members();
        let card_b = bi.len();

        let sigma_b = cov.select_rows(bi.as_slice()).select_columns(bi.as_slice());
        let (l, _) = cholesky_with_jitter(&sigma_b)?;
        let ln_det_half: f64 = (0..card_b).map(|i| l[(i, i)].ln()).sum();
        let chol = Cholesky::<f64, Dyn>::pack_dirty(l);

        let w_b = DVector::from_iterator(card_b, bi.iter().map(|&j| z[j].ln() + nu[j]));
        let ones = DVector::from_element(card_b, 1.0);
        let si_w = chol.solve(&w_b);
        let si_e = chol.solve(&ones);
        let w_norm2 = w_b.dot(&si_w);
        let ew = ones.dot(&si_w);
        let e_norm2 = ones.dot(&si_e);
        let tau2 = 1.0 / e_norm2;
        let g0 = -tau2 * (ew - 1.0);
        let sum_ln_z_b: f64 = bi.iter().map(|&j| z[j].ln()).sum();

        let ln_phi = if ci.is_empty() {
            0.0
        } else {
            let sigma_cb = cov.select_rows(ci.as_slice()).select_columns(bi.as_slice());
            let reg_t = chol.solve(&sigma_cb.transpose());
            let cond = cov.select_rows(ci.as_slice()).select_columns(ci.as_slice())
                - &sigma_cb * &reg_t;
            let d0: Vec<f64> = ci
                .iter()
                .enumerate()
                .map(|(r, &j)| z[j].ln() + nu[j] - (&sigma_cb.row(r) * &si_w)[(0, 0)])
                .collect();
            let cvec: Vec<f64> = ci
                .iter()
                .enumerate()
                .map(|(r, _)| 1.0 - (&sigma_cb.row(r) * &si_e)[(0, 0)])
                .collect();
            let mut sigma_y = cond;
            for r in 0..ci.len() {
                for c in (r + 1)..ci.len() {
                    let v = 0.5 * (sigma_y[(r, c)] + sigma_y[(c, r)]);
                    sigma_y[(r, c)] = v;
                    sigma_y[(c, r)] = v;
                }
            }
            for r in 0..ci.len() {
                for c in 0..ci.len() {
                    sigma_y[(r, c)] += tau2 * cvec[r] * cvec[c];
                }
            }
            let upper: Vec<f64> = d0.iter().zip(&cvec).map(|(d, c)| d + g0 * c).collect();
            crate::gaussian::ln_mvn_cdf(&upper, &sigma_y, self.mvn.target_err, self.mvn.seed)?
        };

        Ok((1.0 - card_b as f64) / 2.0 * LN_2PI + 0.5 * tau2.ln() - ln_det_half - sum_ln_z_b
            + 0.5 * tau2 * (ew - 1.0) * (ew - 1.0)
            - 0.5 * w_norm2
            + ln_phi)
    }
}

// ---------------------------------------------------------------------------
// shared-sample Monte Carlo
// ---------------------------------------------------------------------------

/// A unit-Pareto sample shared by all `mu_S` estimates; fixed once created.
#[derive(Clone, Debug)]
pub struct SharedMcSample {
    values: Vec<f64>,
    seed: u64,
}

impl SharedMcSample {
    pub fn draw(size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("shared MC sample must be nonempty"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let values = (0..size).map(|_| 1.0 / (1.0 - rng.random::<f64>())).collect();
        Ok(SharedMcSample { values, seed })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `mu_S(B; z) = S^{-1} sum_s a(V_s)` with
/// `a(v) = v^{-|B|} lambda(1/v) + v^{2+|B|} lambda(v)`, the same Pareto
/// sample reused for every estimate.
pub struct MonteCarloMu {
    sample: Arc<SharedMcSample>,
    pub mvn: MvnParams,
}

impl MonteCarloMu {
    pub fn new(sample: Arc<SharedMcSample>) -> Self {
        MonteCarloMu { sample, mvn: MvnParams::default() }
    }

    pub fn sample(&self) -> &SharedMcSample {
        &self.sample
    }
}

impl MuStrategy for MonteCarloMu {
    fn name(&self) -> &'static str {
        "monte-carlo"
    }

    fn supports(&self, _model: &SpectralModel) -> bool {
        true
    }

    fn log_mu(&self, model: &SpectralModel, b: &ComponentSet, z: &[f64]) -> Result<f64> {
        check_inputs(model, b, z)?;
        let ctx = model.kernel_ctx(b, z, self.mvn)?;
        let card = b.len() as f64;
        let mut acc = LogSumExp::new();
        for &v in &self.sample.values {
            let ln_v = v.ln();
            let t1 = -card * ln_v + ctx.ln_lambda(1.0 / v);
            let t2 = (2.0 + card) * ln_v + ctx.ln_lambda(v);
            acc.add(t1);
            acc.add(t2);
        }
        Ok(acc.value() - (self.sample.len() as f64).ln())
    }

    fn log_mu_all_subsets(&self, model: &SpectralModel, z: &[f64]) -> Result<Vec<f64>> {
        let m = model.dim();
        if model.kind_name() != "clustered" {
            let mut out = vec![f64::NEG_INFINITY; 1 << m];
            for mask in 1u32..(1u32 << m) {
                let b = ComponentSet::from_mask(mask, m)?;
                out[mask as usize] = self.log_mu(model, &b, z)?;
            }
            return Ok(out);
        }
        // Clustered kind: per-sample tables shared across all subsets.
        let n_masks = 1usize << m;
        let bulk = model.bulk_kernel(z, self.mvn)?;
        let mut acc = vec![LogSumExp::new(); n_masks];
        let mut lam = vec![f64::NEG_INFINITY; n_masks];
        let mut lam_inv = vec![f64::NEG_INFINITY; n_masks];
        for &v in &self.sample.values {
            let ln_v = v.ln();
            bulk.eval(1.0 / v, &mut lam_inv);
            bulk.eval(v, &mut lam);
            for mask in 1..n_masks {
                let card = (mask as u32).count_ones() as f64;
                acc[mask].add(-card * ln_v + lam_inv[mask]);
                acc[mask].add((2.0 + card) * ln_v + lam[mask]);
            }
        }
        let ln_s = (self.sample.len() as f64).ln();
        Ok(acc.iter().map(|a| a.value() - ln_s).collect())
    }
}

// ---------------------------------------------------------------------------
// registry
// ---------------------------------------------------------------------------

/// Options consumed when building a strategy from its registered name.
#[derive(Clone, Default)]
pub struct MuOptions {
    pub quad: QuadOptions,
    pub mvn: MvnParams,
    /// Required by `monte-carlo`.
    pub mc_sample: Option<Arc<SharedMcSample>>,
}

/// The registered strategy names, in registry order.
pub fn strategy_names() -> &'static [&'static str] {
    &["quadrature", "analytic-gaussian", "analytic-lognormal", "archimedean-quadrature", "monte-carlo"]
}

/// Build a strategy by registered name.
pub fn build_strategy(name: &str, opts: &MuOptions) -> Result<Arc<dyn MuStrategy>> {
    match name {
        "quadrature" => Ok(Arc::new(QuadratureMu::new(opts.quad, opts.mvn))),
        "analytic-gaussian" => Ok(Arc::new(AnalyticGaussianMu { mvn: opts.mvn })),
        "analytic-lognormal" => Ok(Arc::new(AnalyticLogNormalMu { mvn: opts.mvn })),
        "archimedean-quadrature" => Ok(Arc::new(ArchimedeanQuadratureMu::new(opts.quad))),
        "monte-carlo" => {
            let sample = opts
                .mc_sample
                .clone()
                .ok_or_else(|| Error::invalid("monte-carlo strategy needs a shared sample"))?;
            Ok(Arc::new(MonteCarloMu { sample, mvn: opts.mvn }))
        }
        other => Err(Error::UnknownStrategy(other.to_string())),
    }
}

/// The default strategy for a model kind: quadrature for Gaussian (the
/// orthant-moment reduction stays available as a cross-check), the analytic
/// reduction for Log-normal, the generator quadrature for clustered.
pub fn default_strategy(model: &SpectralModel, opts: &MuOptions) -> Arc<dyn MuStrategy> {
    let name = match model.kind_name() {
        "lognormal" => "analytic-lognormal",
        "clustered" => "archimedean-quadrature",
        _ => "quadrature",
    };
    build_strategy(name, opts).expect("registered names build")
}

// ---------------------------------------------------------------------------
// derived operations
// ---------------------------------------------------------------------------

/// `mu(B; z)` on the natural scale.
pub fn mu(
    model: &SpectralModel,
    b: &ComponentSet,
    z: &[f64],
    strategy: &dyn MuStrategy,
) -> Result<f64> {
    Ok(strategy.log_mu(model, b, z)?.exp())
}

/// Tail-dependence function `V*(z) = sum_l z_l mu({l}; z)`; satisfies
/// `max_l 1/z_l <= V*(z) <= sum_l 1/z_l`.
pub fn v_star(model: &SpectralModel, z: &[f64], strategy: &dyn MuStrategy) -> Result<f64> {
    Ok(ln_v_star(model, z, strategy)?.exp())
}

pub(crate) fn ln_v_star(
    model: &SpectralModel,
    z: &[f64],
    strategy: &dyn MuStrategy,
) -> Result<f64> {
    let m = model.dim();
    let mut acc = LogSumExp::new();
    for l in 0..m {
        let b = ComponentSet::singleton(l, m);
        acc.add(z[l].ln() + strategy.log_mu(model, &b, z)?);
    }
    Ok(acc.value())
}

/// Cap on `|B|` for the exceedance-pattern diagnostic below: the rectangle
/// probability is an inclusion-exclusion over `2^|B|` CDF calls.
pub const V_B_STAR_CARD_CAP: usize = 12;

/// `V_B*(z) = int_0^inf Pr(U_B > gamma z_B, U_{B^c} <= gamma z_{B^c}) dgamma`,
/// the mass of the exceedance pattern `B`.
pub fn v_b_star(model: &SpectralModel, b: &ComponentSet, z: &[f64], seed: u64) -> Result<f64> {
    check_inputs(model, b, z)?;
    if b.len() > V_B_STAR_CARD_CAP {
        return Err(Error::DimensionCap {
            what: "v_b_star inclusion-exclusion",
            dim: b.len(),
            cap: V_B_STAR_CARD_CAP,
        });
    }
    let mvn = MvnParams { target_err: 3e-6, seed };
    let rect = rect_prob_fn(model, b, z, mvn)?;
    let f = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let gamma = u / (1.0 - u);
        let p = rect(gamma).max(0.0);
        if p > 0.0 {
            p.ln() - 2.0 * (1.0 - u).ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    // The rectangle values carry QMC noise around 1e-6 absolute; a tighter
    // relative tolerance would only chase that noise. This is a diagnostic
    // quantity with a 1e-4 accuracy contract.
    let opts = QuadOptions { rel_tol: 1e-5, max_panels: 512, init_depth: 8 };
    let edges = seed_edges_for_z(z, opts.init_depth);
    Ok(integrate_log_with_edges(&f, &opts, edges)?.ln_integral.exp())
}

/// `Pr(U_B > g z_B, U_{B^c} <= g z_{B^c})` as a closure over `g`.
fn rect_prob_fn<'m>(
    model: &'m SpectralModel,
    b: &ComponentSet,
    z: &[f64],
    mvn: MvnParams,
) -> Result<Box<dyn Fn(f64) -> f64 + 'm>> {
    let m = model.dim();
    let bi: Vec<usize> = b.members().collect();
    let ci: Vec<usize> = b.complement_members();
    let z = z.to_vec();

    match model.kind_name() {
        "gaussian" | "lognormal" => {
            let is_logn = model.kind_name() == "lognormal";
            let cov = if is_logn {
                model.lognormal_parts().unwrap().0.clone()
            } else {
                model.gaussian_cov().unwrap().clone()
            };
            let nu = if is_logn {
                model.lognormal_parts().unwrap().1.clone()
            } else {
                DVector::zeros(m)
            };
            Ok(Box::new(move |g: f64| {
                // inclusion-exclusion over the subsets S of B that are forced
                // below their bound
                let mut total = 0.0;
                let nb = bi.len();
                for s_mask in 0u32..(1u32 << nb) {
                    let mut idx: Vec<usize> = ci.clone();
                    for (pos, &j) in bi.iter().enumerate() {
                        if s_mask & (1 << pos) != 0 {
                            idx.push(j);
                        }
                    }
                    let sign = if s_mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    let p = if idx.is_empty() {
                        1.0
                    } else {
                        let sub = cov.select_rows(idx.as_slice()).select_columns(idx.as_slice());
                        let upper: Vec<f64> = idx
                            .iter()
                            .map(|&j| {
                                if is_logn {
                                    (g * z[j]).ln() + nu[j]
                                } else {
                                    g * z[j]
                                }
                            })
                            .collect();
                        if idx.len() <= crate::gaussian::smalldim::MAX_NESTED_DIM {
                            crate::gaussian::smalldim::mvn_cdf_det(&upper, &sub)
                        } else {
                            match GaussianSpec::centered(sub)
                                .and_then(|spec| mvn_cdf(&upper, &spec, mvn.target_err, mvn.seed))
                            {
                                Ok(est) => est.value,
                                Err(_) => 0.0,
                            }
                        }
                    };
                    total += sign * p;
                }
                total
            }))
        }
        _ => {
            let clusters = model.clusters().unwrap();
            let clusters: Vec<_> = clusters.to_vec();
            let b_mask = b.mask();
            Ok(Box::new(move |g: f64| {
                let mut total = 1.0;
                for cl in &clusters {
                    let members: Vec<usize> = cl.members.members().collect();
                    let in_b: Vec<usize> =
                        members.iter().copied().filter(|&j| b_mask & (1 << j) != 0).collect();
                    let out_b: Vec<usize> =
                        members.iter().copied().filter(|&j| b_mask & (1 << j) == 0).collect();
                    // IE within the cluster using the Archimedean CDF.
                    let mut cluster_p = 0.0;
                    for s_mask in 0u32..(1u32 << in_b.len()) {
                        let sign = if s_mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        let mut t = 0.0;
                        for &j in &out_b {
                            t += cl.copula.psi_inv_from_neg_log(cl.margin.neg_ln_cdf(g * z[j]));
                        }
                        for (pos, &j) in in_b.iter().enumerate() {
                            if s_mask & (1 << pos) != 0 {
                                t += cl
                                    .copula
                                    .psi_inv_from_neg_log(cl.margin.neg_ln_cdf(g * z[j]));
                            }
                        }
                        cluster_p += sign * cl.copula.ln_psi(t).exp();
                    }
                    total *= cluster_p.max(0.0);
                }
                total
            }))
        }
    }
}

/// The exceedance-pattern distribution `p_B(z) = V_B*(z) / sum_B V_B*(z)`
/// over all nonempty subsets, returned in bitmask order.
pub fn p_b_weights(model: &SpectralModel, z: &[f64], seed: u64) -> Result<Vec<(ComponentSet, f64)>> {
    let m = model.dim();
    if m > V_B_STAR_CARD_CAP {
        return Err(Error::DimensionCap { what: "p_b_weights", dim: m, cap: V_B_STAR_CARD_CAP });
    }
    let mut raw = Vec::with_capacity((1 << m) - 1);
    let mut total = 0.0;
    for mask in 1u32..(1u32 << m) {
        let b = ComponentSet::from_mask(mask, m)?;
        let v = v_b_star(model, &b, z, seed)?;
        total += v;
        raw.push((b, v));
    }
    if !(total > 0.0) {
        return Err(Error::invalid("exceedance masses sum to zero"));
    }
    Ok(raw.into_iter().map(|(b, v)| (b, v / total)).collect())
}

/// A model together with its finite-difference perturbations: for each free
/// parameter, the models at `theta_i +- h_i` with `h_i = 1e-5 max(1, |theta_i|)`
/// (one-sided at a boundary). Building them once amortizes the matrix
/// factorizations across every `(B, z)` a score assembly visits.
pub struct FdModels {
    center: SpectralModel,
    /// per parameter: (denominator, up-model, down-model)
    pairs: Vec<(f64, SpectralModel, SpectralModel)>,
}

impl FdModels {
    pub fn build(
        build: &dyn Fn(&[f64]) -> Result<SpectralModel>,
        theta: &ThetaVector,
    ) -> Result<FdModels> {
        let center_vals = theta.values();
        let center = build(&center_vals)?;
        let mut pairs = Vec::with_capacity(center_vals.len());
        for i in 0..center_vals.len() {
            let h = 1e-5 * center_vals[i].abs().max(1.0);
            let lo_bound = theta.params()[i].transform.lower_bound();
            let lo_ok = center_vals[i] - h > lo_bound;
            let (tp, tm, denom) = if lo_ok {
                (center_vals[i] + h, center_vals[i] - h, 2.0 * h)
            } else {
                // one-sided step away from the boundary
                (center_vals[i] + h, center_vals[i], h)
            };
            let mut up = center_vals.clone();
            up[i] = tp;
            let mut dn = center_vals.clone();
            dn[i] = tm;
            pairs.push((denom, build(&up)?, build(&dn)?));
        }
        Ok(FdModels { center, pairs })
    }

    pub fn center(&self) -> &SpectralModel {
        &self.center
    }

    pub fn n_params(&self) -> usize {
        self.pairs.len()
    }

    /// Marginal restriction applied coherently to the center and every
    /// perturbed model.
    pub fn restrict(&self, b: &ComponentSet) -> Result<FdModels> {
        Ok(FdModels {
            center: self.center.restrict(b)?,
            pairs: self
                .pairs
                .iter()
                .map(|(d, up, dn)| Ok((*d, up.restrict(b)?, dn.restrict(b)?)))
                .collect::<Result<Vec<_>>>()?,
        })
    }
}

/// Gradient of `ln mu(B; z)` over prebuilt perturbed models, holding the
/// quadrature mesh (or seeds / shared sample) fixed across the two sides.
pub fn grad_log_mu_with(
    models: &FdModels,
    b: &ComponentSet,
    z: &[f64],
    strategy: &dyn MuStrategy,
) -> Result<Vec<f64>> {
    let plan = strategy.plan(&models.center, b, z)?;
    let mut out = Vec::with_capacity(models.pairs.len());
    for (denom, up, dn) in &models.pairs {
        let lp = strategy.log_mu_planned(up, b, z, &plan)?;
        let lm = strategy.log_mu_planned(dn, b, z, &plan)?;
        out.push((lp - lm) / denom);
    }
    Ok(out)
}

/// Central finite-difference gradient of `mu(B; z)` in the free parameters.
/// Parameters at their boundary fall back to one-sided steps.
pub fn grad_mu(
    build: &dyn Fn(&[f64]) -> Result<SpectralModel>,
    theta: &ThetaVector,
    b: &ComponentSet,
    z: &[f64],
    strategy: &dyn MuStrategy,
) -> Result<Vec<f64>> {
    let grads = grad_log_mu(build, theta, b, z, strategy)?;
    let model = build(&theta.values())?;
    let lnmu = strategy.log_mu(&model, b, z)?;
    let mu_val = lnmu.exp();
    Ok(grads.into_iter().map(|g| g * mu_val).collect())
}

/// Gradient of `ln mu(B; z)` by central differences with common random
/// numbers; the stable building block of every score assembly.
pub fn grad_log_mu(
    build: &dyn Fn(&[f64]) -> Result<SpectralModel>,
    theta: &ThetaVector,
    b: &ComponentSet,
    z: &[f64],
    strategy: &dyn MuStrategy,
) -> Result<Vec<f64>> {
    let models = FdModels::build(build, theta)?;
    grad_log_mu_with(&models, b, z, strategy)
}
