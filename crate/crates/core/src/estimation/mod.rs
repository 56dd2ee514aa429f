//! Likelihood maximization and asymptotic covariances.
//!
//! A [`ModelTemplate`] maps a free-parameter vector to a [`SpectralModel`];
//! [`fit`] maximizes the summed log-likelihood of a [`Dataset`] under any
//! [`LikelihoodKind`] with Nelder-Mead on the unconstrained scale, then
//! attaches the covariance estimator matching the kind. [`fit_smle`] swaps
//! every `mu` evaluation for the shared-sample Monte-Carlo estimate.

mod covariance;
mod nelder_mead;

pub use covariance::{
    covariance_censored, covariance_full, covariance_occurrence, CovarianceMethod,
};
pub use nelder_mead::{nelder_mead, NmResult, OptimizerOptions};

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::combinatorics::ComponentSet;
use crate::error::{Error, Result};
use crate::likelihood::{
    censored_norm, ln_vstar_at_e, loglik_censored, loglik_full, loglik_maxima_occurrence,
    loglik_pairwise, loglik_partition, score, BlockMaximaRecord, ExceedanceRecord,
    LikelihoodKind, LikelihoodValue, Observation,
};
use crate::mu::{FdModels, MonteCarloMu, MuStrategy, SharedMcSample};
use crate::pipeline::RawMatrix;
use crate::spatial::{MaternParams, SiteSet};
use crate::spectral::{
    ArchimedeanClusterSpec, CopulaFamily, MarginFamily, SpectralModel, ThetaParam, ThetaVector,
    Transform,
};

/// One cluster of a clustered-model template; the copula and margin carry
/// the fixed (or initial) parameter values, with flags marking which are
/// free.
#[derive(Clone, Debug)]
pub struct ClusterTemplate {
    pub members: ComponentSet,
    pub copula: CopulaFamily,
    pub copula_free: bool,
    pub margin: MarginFamily,
    pub margin_free: bool,
}

/// A parametric family: the map from free parameters to a spectral model.
#[derive(Clone, Debug)]
pub enum ModelTemplate {
    /// Gaussian spectral vector over sites with Whittle-Matern correlation;
    /// free parameters `(c, nu)`.
    GaussianMatern { sites: SiteSet },
    /// Log-normal exponent with Matern correlation scaled by a fixed
    /// variance; free parameters `(c, nu)`.
    LogNormalMatern { sites: SiteSet, sigma2: f64 },
    /// Clustered Archimedean; free parameters per cluster as flagged, in
    /// cluster order (copula theta before margin alpha).
    Clustered { clusters: Vec<ClusterTemplate> },
}

impl ModelTemplate {
    pub fn dim(&self) -> usize {
        match self {
            ModelTemplate::GaussianMatern { sites } => sites.len(),
            ModelTemplate::LogNormalMatern { sites, .. } => sites.len(),
            ModelTemplate::Clustered { clusters } => {
                clusters.first().map(|c| c.members.ambient_dim()).unwrap_or(0)
            }
        }
    }

    /// The free-parameter layout: names, transforms, and the template's
    /// current values as defaults.
    pub fn theta_layout(&self) -> ThetaVector {
        match self {
            ModelTemplate::GaussianMatern { .. } | ModelTemplate::LogNormalMatern { .. } => {
                ThetaVector::new(vec![
                    ThetaParam { name: "c".into(), value: 1.0, transform: Transform::Positive },
                    ThetaParam { name: "nu".into(), value: 1.0, transform: Transform::Positive },
                ])
                .expect("valid layout")
            }
            ModelTemplate::Clustered { clusters } => {
                let mut params = Vec::new();
                for (i, cl) in clusters.iter().enumerate() {
                    if cl.copula_free {
                        let transform = match cl.copula {
                            CopulaFamily::Gumbel { .. } => Transform::GreaterThan(1.0),
                            CopulaFamily::Clayton { .. } => Transform::Positive,
                        };
                        params.push(ThetaParam {
                            name: format!("cluster{}.{}.theta", i + 1, cl.copula.name()),
                            value: cl.copula.theta(),
                            transform,
                        });
                    }
                    if cl.margin_free {
                        let transform = match cl.margin {
                            MarginFamily::Frechet { .. } => Transform::GreaterThan(1.0),
                            _ => Transform::Positive,
                        };
                        params.push(ThetaParam {
                            name: format!("cluster{}.{}.alpha", i + 1, cl.margin.name()),
                            value: cl.margin.alpha(),
                            transform,
                        });
                    }
                }
                ThetaVector::new(params).expect("valid layout")
            }
        }
    }

    /// Build the model at the given free-parameter values.
    pub fn build(&self, theta: &[f64]) -> Result<SpectralModel> {
        match self {
            ModelTemplate::GaussianMatern { sites } => {
                if theta.len() != 2 {
                    return Err(Error::invalid("GaussianMatern expects (c, nu)"));
                }
                let p = MaternParams::new(theta[0], theta[1])?;
                SpectralModel::gaussian_from_sites(sites, &p)
            }
            ModelTemplate::LogNormalMatern { sites, sigma2 } => {
                if theta.len() != 2 {
                    return Err(Error::invalid("LogNormalMatern expects (c, nu)"));
                }
                let p = MaternParams::new(theta[0], theta[1])?;
                let (corr, _) = crate::spatial::correlation_matrix(sites, &p)?;
                SpectralModel::lognormal_from_cov(corr * *sigma2)
            }
            ModelTemplate::Clustered { clusters } => {
                let mut idx = 0usize;
                let mut specs = Vec::with_capacity(clusters.len());
                for cl in clusters {
                    let copula = if cl.copula_free {
                        let v = *theta
                            .get(idx)
                            .ok_or_else(|| Error::invalid("theta too short for template"))?;
                        idx += 1;
                        cl.copula.with_theta(v)
                    } else {
                        cl.copula
                    };
                    let margin = if cl.margin_free {
                        let v = *theta
                            .get(idx)
                            .ok_or_else(|| Error::invalid("theta too short for template"))?;
                        idx += 1;
                        cl.margin.with_alpha(v)
                    } else {
                        cl.margin
                    };
                    specs.push(ArchimedeanClusterSpec::new(cl.members, copula, margin)?);
                }
                if idx != theta.len() {
                    return Err(Error::invalid("theta too long for template"));
                }
                SpectralModel::clustered(specs)
            }
        }
    }
}

/// The data shapes the likelihood kinds consume.
#[derive(Clone, Debug)]
pub enum Dataset {
    /// Raw componentwise-maxima rows for the full / partition / pairwise
    /// likelihoods.
    Maxima(RawMatrix),
    Exceedances(Vec<ExceedanceRecord>),
    BlockMaxima(Vec<BlockMaximaRecord>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Maxima(m) => m.nrows(),
            Dataset::Exceedances(v) => v.len(),
            Dataset::BlockMaxima(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Dataset::Maxima(m) => Some(m.ncols()),
            Dataset::Exceedances(v) => v.first().map(|r| r.dim()),
            Dataset::BlockMaxima(v) => v.first().map(|r| r.dim()),
        }
    }

    fn matches(&self, kind: &LikelihoodKind) -> bool {
        matches!(
            (self, kind),
            (Dataset::Maxima(_), LikelihoodKind::Full)
                | (Dataset::Maxima(_), LikelihoodKind::PartitionComposite { .. })
                | (Dataset::Maxima(_), LikelihoodKind::Pairwise)
                | (Dataset::Exceedances(_), LikelihoodKind::CensoredExceedance)
                | (Dataset::BlockMaxima(_), LikelihoodKind::MaximaOccurrence)
        )
    }
}

/// Evaluate the summed log-likelihood of a dataset under one parameter
/// value. Per-observation terms are accumulated in input order.
pub fn eval_dataset(
    model: &SpectralModel,
    kind: &LikelihoodKind,
    dataset: &Dataset,
    strategy: &dyn MuStrategy,
) -> Result<LikelihoodValue> {
    if !dataset.matches(kind) {
        return Err(Error::invalid(format!(
            "dataset shape does not match likelihood kind {}",
            kind.name()
        )));
    }
    let m = model.dim();
    // Data-parallel across observations; the sorted reduction below keeps
    // the objective independent of the thread count.
    let per: Vec<f64>;
    let mut n_mu: u64 = 0;
    match (dataset, kind) {
        (Dataset::Maxima(data), LikelihoodKind::Full) => {
            per = (0..data.nrows())
                .into_par_iter()
                .map(|i| loglik_full(model, data.row(i), strategy))
                .collect::<Result<Vec<_>>>()?;
            n_mu += ((1 << m) - 1) * data.nrows() as u64;
        }
        (Dataset::Maxima(data), LikelihoodKind::PartitionComposite { clustering, weighted }) => {
            per = (0..data.nrows())
                .into_par_iter()
                .map(|i| loglik_partition(model, data.row(i), clustering, *weighted, strategy))
                .collect::<Result<Vec<_>>>()?;
            let per_obs: u64 =
                clustering.blocks().iter().map(|b| (1u64 << b.len()) - 1).sum();
            n_mu += per_obs * data.nrows() as u64;
        }
        (Dataset::Maxima(data), LikelihoodKind::Pairwise) => {
            per = (0..data.nrows())
                .into_par_iter()
                .map(|i| loglik_pairwise(model, data.row(i), strategy))
                .collect::<Result<Vec<_>>>()?;
            n_mu += (m * (m - 1) / 2) as u64 * 3 * data.nrows() as u64;
        }
        (Dataset::Exceedances(recs), LikelihoodKind::CensoredExceedance) => {
            let ln_norm = ln_vstar_at_e(model, strategy)?;
            n_mu += m as u64 + recs.len() as u64;
            per = recs
                .par_iter()
                .map(|rec| loglik_censored(model, rec, strategy, Some(ln_norm)))
                .collect::<Result<Vec<_>>>()?;
        }
        (Dataset::BlockMaxima(recs), LikelihoodKind::MaximaOccurrence) => {
            per = recs
                .par_iter()
                .map(|rec| loglik_maxima_occurrence(model, rec, strategy))
                .collect::<Result<Vec<_>>>()?;
            n_mu += recs.iter().map(|r| (m + r.occurrence().num_blocks()) as u64).sum::<u64>();
        }
        _ => unreachable!("shape checked above"),
    }
    // Sum in sorted order: permutation-invariant, so reordering the dataset
    // cannot move the optimizer through float non-associativity.
    let mut sorted = per.clone();
    sorted.sort_by(f64::total_cmp);
    let loglik = sorted.iter().sum();
    Ok(LikelihoodValue { loglik, per_observation: per, n_mu_evals: n_mu })
}

/// Per-observation scores at one parameter value.
fn scores_matrix(
    models: &FdModels,
    kind: &LikelihoodKind,
    dataset: &Dataset,
    strategy: &dyn MuStrategy,
) -> Result<Vec<Vec<f64>>> {
    let cache = match kind {
        LikelihoodKind::CensoredExceedance => Some(censored_norm(models, strategy)?),
        _ => None,
    };
    let out: Vec<Vec<f64>> = match dataset {
        Dataset::Maxima(data) => (0..data.nrows())
            .into_par_iter()
            .map(|i| score(models, kind, Observation::Maxima(data.row(i)), strategy, None))
            .collect::<Result<Vec<_>>>()?,
        Dataset::Exceedances(recs) => recs
            .par_iter()
            .map(|rec| score(models, kind, Observation::Exceedance(rec), strategy, cache.as_ref()))
            .collect::<Result<Vec<_>>>()?,
        Dataset::BlockMaxima(recs) => recs
            .par_iter()
            .map(|rec| score(models, kind, Observation::BlockMaxima(rec), strategy, None))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(out)
}

/// Simulated-likelihood bookkeeping recorded on the report.
#[derive(Clone, Debug, Serialize)]
pub struct SmleInfo {
    pub s: usize,
    pub seed: u64,
    pub n_over_s: f64,
}

/// Everything a fit produces.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub parameter_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub reason: String,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub covariance_method: Option<CovarianceMethod>,
    pub covariance_warning: Option<String>,
    pub n_obs: usize,
    /// For the censored kind, the implied block count `|N_k| / V*(e)`; the
    /// block count itself for the occurrence kind; `n_obs` otherwise.
    pub k_effective: f64,
    pub iterations: usize,
    pub n_evals: usize,
    /// Post-fit diagnostic: infinity norm of the mean per-observation score.
    pub mean_score_inf_norm: Option<f64>,
    pub wall_time_s: f64,
    pub smle: Option<SmleInfo>,
    /// Set when margins were standardized from data (Hill), in which case
    /// the reported covariance ignores the margin-estimation noise.
    pub margins_estimated_variance_approximate: bool,
}

/// Fit options beyond the optimizer itself.
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub optimizer: OptimizerOptions,
    pub compute_covariance: bool,
    /// Provenance flag copied onto the report.
    pub margins_estimated: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            optimizer: OptimizerOptions::default(),
            compute_covariance: true,
            margins_estimated: false,
        }
    }
}

/// Maximize the summed log-likelihood of `dataset` under `kind`, starting
/// from `theta0` (natural scale).
pub fn fit(
    dataset: &Dataset,
    template: &ModelTemplate,
    kind: &LikelihoodKind,
    theta0: &[f64],
    strategy: &dyn MuStrategy,
    opts: &FitOptions,
) -> Result<FitReport> {
    let t0 = Instant::now();
    if dataset.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    if !dataset.matches(kind) {
        return Err(Error::invalid(format!(
            "dataset shape does not match likelihood kind {}",
            kind.name()
        )));
    }
    if let Some(d) = dataset.dim() {
        if d != template.dim() {
            return Err(Error::invalid(format!(
                "dataset dimension {d} does not match template dimension {}",
                template.dim()
            )));
        }
    }
    let layout = template.theta_layout().with_values(theta0)?;
    let n = dataset.len();

    let (theta_hat, value, nm) = if layout.is_empty() {
        let model = template.build(&[])?;
        let v = eval_dataset(&model, kind, dataset, strategy)?;
        (Vec::new(), v.loglik, None)
    } else {
        let u0 = layout.to_unconstrained();
        let objective = |u: &[f64]| -> f64 {
            let theta = layout.from_unconstrained(u);
            match template
                .build(&theta)
                .and_then(|model| eval_dataset(&model, kind, dataset, strategy))
            {
                Ok(v) if v.loglik.is_finite() => -v.loglik,
                _ => f64::INFINITY,
            }
        };
        let res = nelder_mead(objective, &u0, &opts.optimizer)?;
        (layout.from_unconstrained(&res.x), -res.value, Some(res))
    };
    let converged = nm.as_ref().map(|r| r.converged).unwrap_or(true);
    let reason = nm.as_ref().map(|r| r.reason.clone()).unwrap_or_else(|| "no free parameters".into());

    let mut report = FitReport {
        parameter_names: layout.names().iter().map(|s| s.to_string()).collect(),
        theta_hat: theta_hat.clone(),
        loglik: value,
        converged,
        reason,
        covariance: None,
        covariance_method: None,
        covariance_warning: None,
        n_obs: n,
        k_effective: n as f64,
        iterations: nm.as_ref().map(|r| r.iterations).unwrap_or(0),
        n_evals: nm.as_ref().map(|r| r.n_evals).unwrap_or(1),
        mean_score_inf_norm: None,
        wall_time_s: 0.0,
        smle: None,
        margins_estimated_variance_approximate: opts.margins_estimated,
    };

    if converged && !layout.is_empty() && opts.compute_covariance {
        let fitted_layout = layout.with_values(&theta_hat)?;
        match attach_covariance(dataset, template, kind, &fitted_layout, strategy, n, value) {
            Ok((cov, method, k_eff, score_norm)) => {
                report.covariance = cov.map(|c| matrix_rows(&c));
                report.covariance_method = method;
                report.k_effective = k_eff;
                report.mean_score_inf_norm = Some(score_norm);
            }
            Err(e) => {
                report.covariance_warning = Some(e.to_string());
            }
        }
    } else if !converged {
        report.covariance_warning = Some("optimizer did not converge; covariance omitted".into());
    }

    report.wall_time_s = t0.elapsed().as_secs_f64();
    Ok(report)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

type CovarianceParts = (Option<DMatrix<f64>>, Option<CovarianceMethod>, f64, f64);

fn attach_covariance(
    dataset: &Dataset,
    template: &ModelTemplate,
    kind: &LikelihoodKind,
    layout: &ThetaVector,
    strategy: &dyn MuStrategy,
    n: usize,
    loglik: f64,
) -> Result<CovarianceParts> {
    let build = |th: &[f64]| template.build(th);
    let models = FdModels::build(&build, layout)?;
    let scores = scores_matrix(&models, kind, dataset, strategy)?;
    let p = layout.len();
    let mean_score: Vec<f64> = (0..p)
        .map(|i| scores.iter().map(|s| s[i]).sum::<f64>() / n as f64)
        .collect();
    let score_norm = mean_score.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // normalized as in the convergence invariant
    let score_norm = score_norm / (1.0 + loglik.abs() / n as f64);

    let (cov, method, k_eff) = match kind {
        LikelihoodKind::Full => {
            let minus_h = fd_information(dataset, template, kind, layout, strategy)?;
            (covariance_full(&scores, &minus_h, n, true)?, CovarianceMethod::FullInfo, n as f64)
        }
        LikelihoodKind::PartitionComposite { .. } | LikelihoodKind::Pairwise => {
            let minus_h = fd_information(dataset, template, kind, layout, strategy)?;
            (covariance_full(&scores, &minus_h, n, false)?, CovarianceMethod::Sandwich, n as f64)
        }
        LikelihoodKind::CensoredExceedance => {
            let vstar = ln_vstar_at_e(models.center(), strategy)?.exp();
            let k_hat = n as f64 / vstar;
            (covariance_censored(&scores)?, CovarianceMethod::CensoredInfo, k_hat)
        }
        LikelihoodKind::MaximaOccurrence => {
            (covariance_occurrence(&scores, n)?, CovarianceMethod::OccurrenceInfo, n as f64)
        }
    };
    // PSD guard: tiny negative eigenvalues are roundoff, big ones a failure.
    let min_eig = covariance::min_eigenvalue(&cov);
    if min_eig < -1e-8 * cov.diagonal().amax().max(1.0) {
        return Err(Error::Optimizer(format!(
            "covariance failed the PSD check (min eigenvalue {min_eig:.3e})"
        )));
    }
    Ok((Some(cov), Some(method), k_eff, score_norm))
}

/// `-d(mean score)/d(theta)` by central differences of the analytic score
/// (one differentiation level on top of the FD `ln mu` gradients).
fn fd_information(
    dataset: &Dataset,
    template: &ModelTemplate,
    kind: &LikelihoodKind,
    layout: &ThetaVector,
    strategy: &dyn MuStrategy,
) -> Result<DMatrix<f64>> {
    let p = layout.len();
    let center = layout.values();
    let n = dataset.len() as f64;
    let build = |th: &[f64]| template.build(th);
    let mean_score_at = |vals: &[f64]| -> Result<Vec<f64>> {
        let lay = layout.with_values(vals)?;
        let models = FdModels::build(&build, &lay)?;
        let scores = scores_matrix(&models, kind, dataset, strategy)?;
        Ok((0..p).map(|i| scores.iter().map(|s| s[i]).sum::<f64>() / n).collect())
    };
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let step = 1e-4 * center[j].abs().max(1.0);
        let mut up = center.clone();
        up[j] += step;
        let mut dn = center.clone();
        dn[j] -= step;
        let lo = layout.params()[j].transform.lower_bound();
        let (s_up, s_dn, denom) = if dn[j] > lo {
            (mean_score_at(&up)?, mean_score_at(&dn)?, 2.0 * step)
        } else {
            (mean_score_at(&up)?, mean_score_at(&center)?, step)
        };
        for i in 0..p {
            h[(i, j)] = (s_up[i] - s_dn[i]) / denom;
        }
    }
    // observed information = -Hessian, symmetrized
    let mut info = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            info[(i, j)] = -0.5 * (h[(i, j)] + h[(j, i)]);
        }
    }
    Ok(info)
}

/// Simulated maximum likelihood: one shared unit-Pareto sample of size `s`
/// drives every `mu` estimate; the report records `S` and the regime ratio
/// `n/S`.
pub fn fit_smle(
    dataset: &Dataset,
    template: &ModelTemplate,
    s: usize,
    seed: u64,
    theta0: &[f64],
    opts: &FitOptions,
) -> Result<FitReport> {
    if s < 100 {
        return Err(Error::invalid("SMLE needs a shared sample of at least 100"));
    }
    let sample = Arc::new(SharedMcSample::draw(s, seed)?);
    let strategy = MonteCarloMu::new(sample);
    let mut report = fit(dataset, template, &LikelihoodKind::Full, theta0, &strategy, opts)?;
    report.smle = Some(SmleInfo { s, seed, n_over_s: dataset.len() as f64 / s as f64 });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mu::{MuOptions, QuadratureMu};
    use crate::simulate::{sample_max_stable, SimConfig};
    use crate::spectral::MvnParams;
    use approx::assert_relative_eq;

    fn quad() -> QuadratureMu {
        QuadratureMu::new(crate::mu::QuadOptions::default(), MvnParams::default())
    }

    fn logistic_template(m: usize, alpha: f64) -> ModelTemplate {
        ModelTemplate::Clustered {
            clusters: vec![ClusterTemplate {
                members: ComponentSet::full(m),
                copula: CopulaFamily::Gumbel { theta: 1.0 },
                copula_free: false,
                margin: MarginFamily::Frechet { alpha },
                margin_free: true,
            }],
        }
    }

    fn logistic_sample(m: usize, alpha: f64, n: usize, seed: u64) -> RawMatrix {
        let model = logistic_template(m, alpha).build(&[alpha]).unwrap();
        let cfg = SimConfig::new(model, n, seed).unwrap().with_truncation(1_000).unwrap();
        sample_max_stable(&cfg).unwrap().0
    }

    #[test]
    fn template_layouts() {
        let t = logistic_template(3, 1.7);
        let layout = t.theta_layout();
        assert_eq!(layout.names(), vec!["cluster1.frechet.alpha"]);
        assert_eq!(layout.values(), vec![1.7]);
        assert!(t.build(&[1.7]).is_ok());
        assert!(t.build(&[]).is_err());
        assert!(t.build(&[1.7, 1.0]).is_err());

        let sites = SiteSet::uniform_random(3, 2.0, 1).unwrap();
        let g = ModelTemplate::GaussianMatern { sites };
        assert_eq!(g.theta_layout().names(), vec!["c", "nu"]);
    }

    #[test]
    fn fit_logistic_recovers_dependence() {
        // simulate-then-fit self-consistency at the paper's theta_1 = 1.7
        let data = logistic_sample(3, 1.7, 300, 42);
        let dataset = Dataset::Maxima(data);
        let template = logistic_template(3, 1.7);
        let opts = FitOptions {
            optimizer: OptimizerOptions { restarts: 1, max_iters: 150, ..Default::default() },
            ..Default::default()
        };
        let report =
            fit(&dataset, &template, &LikelihoodKind::Full, &[1.7], &quad(), &opts).unwrap();
        assert!(report.converged, "{}", report.reason);
        // asymptotic SD at n = 300 is about 0.05; allow 3-4 sigma
        assert!(
            (report.theta_hat[0] - 1.7).abs() < 0.2,
            "alpha_hat = {}",
            report.theta_hat[0]
        );
        assert!(report.mean_score_inf_norm.unwrap() < 1e-3);
        let cov = report.covariance.as_ref().unwrap();
        assert!(cov[0][0] > 0.0);
        assert_eq!(report.covariance_method, Some(CovarianceMethod::FullInfo));
    }

    #[test]
    fn fit_rejects_bad_shapes() {
        let template = logistic_template(2, 1.5);
        let empty = Dataset::Exceedances(Vec::new());
        assert!(matches!(
            fit(&empty, &template, &LikelihoodKind::CensoredExceedance, &[1.5], &quad(), &FitOptions::default()),
            Err(Error::Data(_))
        ));
        let data = Dataset::Maxima(RawMatrix::from_rows(vec![vec![1.0, 2.0]]).unwrap());
        assert!(fit(
            &data,
            &template,
            &LikelihoodKind::CensoredExceedance,
            &[1.5],
            &quad(),
            &FitOptions::default()
        )
        .is_err());
    }

    #[test]
    fn fit_invariant_to_row_order() {
        let data = logistic_sample(2, 1.5, 60, 7);
        let rows: Vec<Vec<f64>> = (0..60).map(|i| data.row(i).to_vec()).collect();
        let mut rev = rows.clone();
        rev.reverse();
        let template = logistic_template(2, 1.5);
        let opts = FitOptions { compute_covariance: false, ..Default::default() };
        let a = fit(
            &Dataset::Maxima(RawMatrix::from_rows(rows).unwrap()),
            &template,
            &LikelihoodKind::Full,
            &[1.5],
            &quad(),
            &opts,
        )
        .unwrap();
        let b = fit(
            &Dataset::Maxima(RawMatrix::from_rows(rev).unwrap()),
            &template,
            &LikelihoodKind::Full,
            &[1.5],
            &quad(),
            &opts,
        )
        .unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
    }

    #[test]
    fn reparameterization_matches_grid_search() {
        // scalar logistic: the unconstrained fit against a fine natural-scale
        // grid search
        let data = logistic_sample(2, 1.6, 80, 11);
        let dataset = Dataset::Maxima(data);
        let template = logistic_template(2, 1.6);
        let q = quad();
        let opts = FitOptions { compute_covariance: false, ..Default::default() };
        let report =
            fit(&dataset, &template, &LikelihoodKind::Full, &[1.6], &q, &opts).unwrap();

        let eval = |alpha: f64| {
            let model = template.build(&[alpha]).unwrap();
            eval_dataset(&model, &LikelihoodKind::Full, &dataset, &q).unwrap().loglik
        };
        let mut best = (f64::NEG_INFINITY, 0.0);
        let center = report.theta_hat[0];
        let mut a = center - 0.15;
        while a < center + 0.15 {
            let v = eval(a);
            if v > best.0 {
                best = (v, a);
            }
            a += 1e-3;
        }
        assert!(
            (report.theta_hat[0] - best.1).abs() < 2e-3,
            "fit {} vs grid {}",
            report.theta_hat[0],
            best.1
        );
    }

    #[test]
    fn pairwise_equals_full_covariance_at_m2() {
        // l3 = l1 at m = 2, so the sandwich collapses to the full-info value
        let data = logistic_sample(2, 1.5, 80, 3);
        let dataset = Dataset::Maxima(data);
        let template = logistic_template(2, 1.5);
        let q = quad();
        let opts = FitOptions::default();
        let full =
            fit(&dataset, &template, &LikelihoodKind::Full, &[1.5], &q, &opts).unwrap();
        let pair =
            fit(&dataset, &template, &LikelihoodKind::Pairwise, &[1.5], &q, &opts).unwrap();
        assert_relative_eq!(full.theta_hat[0], pair.theta_hat[0], max_relative = 1e-6);
        let cf = full.covariance.unwrap()[0][0];
        let cp = pair.covariance.unwrap()[0][0];
        // information identity vs sandwich: equal up to FD noise
        assert_relative_eq!(cf, cp, max_relative = 0.15);
    }

    #[test]
    fn censored_fit_and_k_effective() {
        let model = logistic_template(2, 1.6).build(&[1.6]).unwrap();
        let cfg = crate::simulate::SimConfig::new(model, 1_500, 19).unwrap();
        let raw = crate::simulate::sample_mda(&cfg).unwrap();
        let pareto = crate::pipeline::rank_pareto_transform(&raw).unwrap();
        let recs = crate::pipeline::censor_sample(&pareto, 150).unwrap();
        let n_exc = recs.len();
        let dataset = Dataset::Exceedances(recs);
        let template = logistic_template(2, 1.6);
        let report = fit(
            &dataset,
            &template,
            &LikelihoodKind::CensoredExceedance,
            &[1.6],
            &quad(),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert!((report.theta_hat[0] - 1.6).abs() < 0.25, "{}", report.theta_hat[0]);
        assert_eq!(report.covariance_method, Some(CovarianceMethod::CensoredInfo));
        // k_hat = |N_k| / V*(e) is below the exceedance count (V* >= 1)
        assert!(report.k_effective <= n_exc as f64 + 1e-9);
    }

    #[test]
    fn smle_deterministic_and_near_mle() {
        let data = logistic_sample(3, 1.7, 60, 5);
        let dataset = Dataset::Maxima(data);
        let template = logistic_template(3, 1.7);
        let opts = FitOptions { compute_covariance: false, ..Default::default() };
        let a = fit_smle(&dataset, &template, 20_000, 99, &[1.7], &opts).unwrap();
        let b = fit_smle(&dataset, &template, 20_000, 99, &[1.7], &opts).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        assert_relative_eq!(a.smle.as_ref().unwrap().n_over_s, 60.0 / 20_000.0, epsilon = 1e-12);

        let mle = fit(&dataset, &template, &LikelihoodKind::Full, &[1.7], &quad(), &opts).unwrap();
        assert!(
            (a.theta_hat[0] - mle.theta_hat[0]).abs() < 0.08,
            "smle {} vs mle {}",
            a.theta_hat[0],
            mle.theta_hat[0]
        );
        assert!(fit_smle(&dataset, &template, 50, 1, &[1.7], &opts).is_err());
    }

    #[test]
    fn occurrence_fit_covariance_method() {
        let model = logistic_template(2, 1.5).build(&[1.5]).unwrap();
        let cfg = crate::simulate::SimConfig::new(model, 3_000, 31).unwrap();
        let raw = crate::simulate::sample_mda(&cfg).unwrap();
        let pareto = crate::pipeline::rank_pareto_transform(&raw).unwrap();
        let recs = crate::pipeline::block_maxima_with_occurrence(&pareto, 60).unwrap();
        let dataset = Dataset::BlockMaxima(recs);
        let template = logistic_template(2, 1.5);
        let report = fit(
            &dataset,
            &template,
            &LikelihoodKind::MaximaOccurrence,
            &[1.5],
            &quad(),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert_eq!(report.covariance_method, Some(CovarianceMethod::OccurrenceInfo));
        assert!((report.theta_hat[0] - 1.5).abs() < 0.3, "{}", report.theta_hat[0]);
    }
}
