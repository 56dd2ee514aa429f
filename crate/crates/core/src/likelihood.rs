//! The five log-likelihood objectives and their score assemblies.
//!
//! Everything reduces to `ln mu(B; z)` values supplied by a [`MuStrategy`]:
//!
//! - full: `l1 = -sum_l z_l mu({l}; z) + ln sum_pi prod_B mu(B; z)`, the
//!   partition sum streamed over restricted growth strings with all
//!   `2^m - 1` subset values cached first;
//! - partition-composite: `l2 = sum_B |B| l1(z_B)` over a fixed clustering
//!   (the block weights can be disabled);
//! - pairwise: `l3 = sum_{i<j} l1(z_{ij})`;
//! - censored threshold: `ln mu(B; x) - ln V*(e)` for an exceedance with
//!   exceed-set `B`;
//! - maxima + occurrence: `-sum_l z_l mu({l}; z) + sum_{B in pi} ln mu(B; z)`.
//!
//! Scores are assembled from finite-difference `ln mu` gradients with common
//! random numbers, reusing the same streamed partition pass.

use crate::combinatorics::{for_each_partition_assignment, ComponentSet, Partition};
use crate::error::{Error, Result};
use crate::mu::{FdModels, MuStrategy};
use crate::numeric::LogSumExp;
use crate::spectral::SpectralModel;

/// Dimension cap for the full likelihood (the partition sum has Bell(m)
/// terms). Callers beyond this must use the partition-composite objective.
pub const FULL_LIKELIHOOD_DIM_CAP: usize = 10;

/// A censored observation `x` with its exceed set `B = {j : x_j > 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExceedanceRecord {
    x: Vec<f64>,
    exceed_set: ComponentSet,
}

impl ExceedanceRecord {
    /// Build from the censored vector; the exceed set is derived and must be
    /// nonempty, with `x_j = 1` exactly off it.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let m = x.len();
        let mut members = Vec::new();
        for (j, &v) in x.iter().enumerate() {
            if !(v >= 1.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "exceedance coordinate {j} must be finite and >= 1, got {v}"
                )));
            }
            if v > 1.0 {
                members.push(j);
            }
        }
        if members.is_empty() {
            return Err(Error::invalid("exceedance record needs at least one component above 1"));
        }
        let exceed_set = ComponentSet::from_members(&members, m)?;
        Ok(ExceedanceRecord { x, exceed_set })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn exceed_set(&self) -> &ComponentSet {
        &self.exceed_set
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// A rescaled block-maxima vector with its occurrence partition.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMaximaRecord {
    z: Vec<f64>,
    occurrence: Partition,
}

impl BlockMaximaRecord {
    pub fn new(z: Vec<f64>, occurrence: Partition) -> Result<Self> {
        if occurrence.ambient_dim() != z.len() {
            return Err(Error::invalid("occurrence partition dimension mismatch"));
        }
        if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("block maxima must be strictly positive"));
        }
        Ok(BlockMaximaRecord { z, occurrence })
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn occurrence(&self) -> &Partition {
        &self.occurrence
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Which objective to maximize.
#[derive(Clone, Debug, PartialEq)]
pub enum LikelihoodKind {
    Full,
    /// Block-size-weighted sum of block likelihoods; `weighted: false` drops
    /// the `|B|` factors for experimentation.
    PartitionComposite { clustering: Partition, weighted: bool },
    Pairwise,
    CensoredExceedance,
    MaximaOccurrence,
}

impl LikelihoodKind {
    pub fn name(&self) -> &'static str {
        match self {
            LikelihoodKind::Full => "full",
            LikelihoodKind::PartitionComposite { .. } => "partition",
            LikelihoodKind::Pairwise => "pairwise",
            LikelihoodKind::CensoredExceedance => "censored",
            LikelihoodKind::MaximaOccurrence => "maxima-occurrence",
        }
    }
}

/// A dataset-level likelihood evaluation.
#[derive(Clone, Debug)]
pub struct LikelihoodValue {
    pub loglik: f64,
    pub per_observation: Vec<f64>,
    /// Logical count of `mu` evaluations consumed.
    pub n_mu_evals: u64,
}

/// The partition sum `ln sum_pi prod_{B in pi} mu(B; z)` over cached subset
/// values (indexed by bitmask).
fn ln_partition_sum(m: usize, ln_mu: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    let mut masks = vec![0u32; m];
    for_each_partition_assignment(m, |assignment| {
        let nblocks = assignment.iter().max().unwrap() + 1;
        for mk in masks[..nblocks].iter_mut() {
            *mk = 0;
        }
        for (j, &a) in assignment.iter().enumerate() {
            masks[a] |= 1 << j;
        }
        let mut t = 0.0;
        for &mk in &masks[..nblocks] {
            t += ln_mu[mk as usize];
        }
        acc.add(t);
    });
    acc.value()
}

/// Full log-likelihood of one observation `z`.
pub fn loglik_full(model: &SpectralModel, z: &[f64], strategy: &dyn MuStrategy) -> Result<f64> {
    let m = model.dim();
    if m > FULL_LIKELIHOOD_DIM_CAP {
        return Err(Error::DimensionCap {
            what: "full likelihood (use the partition-composite objective)",
            dim: m,
            cap: FULL_LIKELIHOOD_DIM_CAP,
        });
    }
    let ln_mu = strategy.log_mu_all_subsets(model, z)?;
    let mut vstar = 0.0;
    for l in 0..m {
        vstar += z[l] * ln_mu[1usize << l].exp();
    }
    Ok(-vstar + ln_partition_sum(m, &ln_mu))
}

/// Partition-composite log-likelihood: block-size-weighted sum of the full
/// likelihoods of the marginal models restricted to each block.
pub fn loglik_partition(
    model: &SpectralModel,
    z: &[f64],
    clustering: &Partition,
    weighted: bool,
    strategy: &dyn MuStrategy,
) -> Result<f64> {
    if clustering.ambient_dim() != model.dim() {
        return Err(Error::invalid("clustering dimension mismatch"));
    }
    if clustering.max_block_size() > FULL_LIKELIHOOD_DIM_CAP {
        return Err(Error::DimensionCap {
            what: "partition-composite block",
            dim: clustering.max_block_size(),
            cap: FULL_LIKELIHOOD_DIM_CAP,
        });
    }
    let mut total = 0.0;
    for block in clustering.blocks() {
        let sub = model.restrict(block)?;
        let z_b: Vec<f64> = block.members().map(|j| z[j]).collect();
        let l1 = loglik_full(&sub, &z_b, strategy)?;
        total += if weighted { block.len() as f64 * l1 } else { l1 };
    }
    Ok(total)
}

/// Pairwise log marginal likelihood: sum of bivariate full likelihoods over
/// all `m(m-1)/2` pairs.
pub fn loglik_pairwise(model: &SpectralModel, z: &[f64], strategy: &dyn MuStrategy) -> Result<f64> {
    let m = model.dim();
    if m < 2 {
        return Err(Error::invalid("pairwise likelihood needs at least two components"));
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let pair = ComponentSet::from_members(&[i, j], m)?;
            let sub = model.restrict(&pair)?;
            total += loglik_full(&sub, &[z[i], z[j]], strategy)?;
        }
    }
    Ok(total)
}

/// Censored-threshold log-likelihood of one exceedance record:
/// `ln mu(B; x) - ln V*(e)`. The normalization depends only on the
/// parameters; callers evaluating a dataset compute it once via
/// [`ln_vstar_at_e`] and pass it in.
pub fn loglik_censored(
    model: &SpectralModel,
    rec: &ExceedanceRecord,
    strategy: &dyn MuStrategy,
    ln_vstar_e: Option<f64>,
) -> Result<f64> {
    if rec.dim() != model.dim() {
        return Err(Error::invalid("exceedance record dimension mismatch"));
    }
    let ln_norm = match ln_vstar_e {
        Some(v) => v,
        None => ln_vstar_at_e(model, strategy)?,
    };
    Ok(strategy.log_mu(model, rec.exceed_set(), rec.x())? - ln_norm)
}

/// `ln V*(e) = ln sum_l mu({l}; e)`: the censored-likelihood normalizer.
pub fn ln_vstar_at_e(model: &SpectralModel, strategy: &dyn MuStrategy) -> Result<f64> {
    let e = vec![1.0; model.dim()];
    crate::mu::ln_v_star(model, &e, strategy)
}

/// Componentwise-maxima-with-occurrence log-likelihood of one record.
pub fn loglik_maxima_occurrence(
    model: &SpectralModel,
    rec: &BlockMaximaRecord,
    strategy: &dyn MuStrategy,
) -> Result<f64> {
    if rec.dim() != model.dim() {
        return Err(Error::invalid("block maxima record dimension mismatch"));
    }
    let m = model.dim();
    let z = rec.z();
    let mut vstar = 0.0;
    for l in 0..m {
        let b = ComponentSet::singleton(l, m);
        vstar += z[l] * strategy.log_mu(model, &b, z)?.exp();
    }
    let mut sum = 0.0;
    for block in rec.occurrence().blocks() {
        sum += strategy.log_mu(model, block, z)?;
    }
    Ok(-vstar + sum)
}

/// One observation of whichever shape the likelihood kind needs.
#[derive(Clone, Copy, Debug)]
pub enum Observation<'a> {
    Maxima(&'a [f64]),
    Exceedance(&'a ExceedanceRecord),
    BlockMaxima(&'a BlockMaximaRecord),
}

/// Per-parameter caches shared across the observations of one censored
/// dataset evaluation: `ln V*(e)` and its gradient.
#[derive(Clone, Debug)]
pub struct CensoredNorm {
    pub ln_vstar: f64,
    pub grad_ln_vstar: Vec<f64>,
}

/// The censored normalizer and its parameter gradient.
pub fn censored_norm(models: &FdModels, strategy: &dyn MuStrategy) -> Result<CensoredNorm> {
    let m = models.center().dim();
    let e = vec![1.0; m];
    let p = models.n_params();
    // ln V* = LSE_l ln mu_l; grad = softmax-weighted sum of grad ln mu_l.
    let mut ln_mus = Vec::with_capacity(m);
    let mut grads = Vec::with_capacity(m);
    for l in 0..m {
        let b = ComponentSet::singleton(l, m);
        ln_mus.push(strategy.log_mu(models.center(), &b, &e)?);
        grads.push(crate::mu::grad_log_mu_with(models, &b, &e, strategy)?);
    }
    let ln_vstar = crate::numeric::log_sum_exp(&ln_mus);
    let mut grad = vec![0.0; p];
    for l in 0..m {
        let w = (ln_mus[l] - ln_vstar).exp();
        for i in 0..p {
            grad[i] += w * grads[l][i];
        }
    }
    Ok(CensoredNorm { ln_vstar, grad_ln_vstar: grad })
}

/// Score (parameter gradient of the log-likelihood) of one observation under
/// the given kind, assembled from finite-difference `ln mu` gradients.
///
/// The censored kind accepts a precomputed [`CensoredNorm`]; without one it
/// is recomputed per call.
pub fn score(
    models: &FdModels,
    kind: &LikelihoodKind,
    obs: Observation<'_>,
    strategy: &dyn MuStrategy,
    censored_cache: Option<&CensoredNorm>,
) -> Result<Vec<f64>> {
    match (kind, obs) {
        (LikelihoodKind::Full, Observation::Maxima(z)) => score_full(models, z, strategy),
        (LikelihoodKind::PartitionComposite { clustering, weighted }, Observation::Maxima(z)) => {
            let mut total = vec![0.0; models.n_params()];
            for block in clustering.blocks() {
                let sub = models.restrict(block)?;
                let z_b: Vec<f64> = block.members().map(|j| z[j]).collect();
                let s = score_full(&sub, &z_b, strategy)?;
                let w = if *weighted { block.len() as f64 } else { 1.0 };
                for i in 0..total.len() {
                    total[i] += w * s[i];
                }
            }
            Ok(total)
        }
        (LikelihoodKind::Pairwise, Observation::Maxima(z)) => {
            let m = models.center().dim();
            let mut total = vec![0.0; models.n_params()];
            for i in 0..m {
                for j in (i + 1)..m {
                    let pair = ComponentSet::from_members(&[i, j], m)?;
                    let sub = models.restrict(&pair)?;
                    let s = score_full(&sub, &[z[i], z[j]], strategy)?;
                    for k in 0..total.len() {
                        total[k] += s[k];
                    }
                }
            }
            Ok(total)
        }
        (LikelihoodKind::CensoredExceedance, Observation::Exceedance(rec)) => {
            let owned;
            let norm = match censored_cache {
                Some(c) => c,
                None => {
                    owned = censored_norm(models, strategy)?;
                    &owned
                }
            };
            let g = crate::mu::grad_log_mu_with(models, rec.exceed_set(), rec.x(), strategy)?;
            Ok(g.iter().zip(&norm.grad_ln_vstar).map(|(a, b)| a - b).collect())
        }
        (LikelihoodKind::MaximaOccurrence, Observation::BlockMaxima(rec)) => {
            let m = models.center().dim();
            let z = rec.z();
            let mut total = vec![0.0; models.n_params()];
            for l in 0..m {
                let b = ComponentSet::singleton(l, m);
                let lnmu = strategy.log_mu(models.center(), &b, z)?;
                let g = crate::mu::grad_log_mu_with(models, &b, z, strategy)?;
                let mu_l = lnmu.exp();
                for i in 0..total.len() {
                    total[i] -= z[l] * mu_l * g[i];
                }
            }
            for block in rec.occurrence().blocks() {
                let g = crate::mu::grad_log_mu_with(models, block, z, strategy)?;
                for i in 0..total.len() {
                    total[i] += g[i];
                }
            }
            Ok(total)
        }
        _ => Err(Error::invalid(format!(
            "observation shape does not match likelihood kind {}",
            kind.name()
        ))),
    }
}

/// Score of the full likelihood: `-sum_l z_l grad mu_l + sum_pi w_pi
/// sum_{B in pi} grad ln mu_B` with softmax weights `w_pi` accumulated over
/// the streamed partition pass.
fn score_full(models: &FdModels, z: &[f64], strategy: &dyn MuStrategy) -> Result<Vec<f64>> {
    let m = models.center().dim();
    if m > FULL_LIKELIHOOD_DIM_CAP {
        return Err(Error::DimensionCap {
            what: "full-likelihood score",
            dim: m,
            cap: FULL_LIKELIHOOD_DIM_CAP,
        });
    }
    let p = models.n_params();
    let ln_mu = strategy.log_mu_all_subsets(models.center(), z)?;
    let n_masks = 1usize << m;
    let mut grads = vec![vec![0.0; p]; n_masks];
    for (mask, slot) in grads.iter_mut().enumerate().skip(1) {
        let b = ComponentSet::from_mask(mask as u32, m)?;
        *slot = crate::mu::grad_log_mu_with(models, &b, z, strategy)?;
    }

    let mut out = vec![0.0; p];
    for l in 0..m {
        let mask = 1usize << l;
        let mu_l = ln_mu[mask].exp();
        for i in 0..p {
            out[i] -= z[l] * mu_l * grads[mask][i];
        }
    }

    // streamed softmax over partitions with a running max
    let mut run_max = f64::NEG_INFINITY;
    let mut denom = 0.0;
    let mut numer = vec![0.0; p];
    let mut masks = vec![0u32; m];
    let mut g_pi = vec![0.0; p];
    for_each_partition_assignment(m, |assignment| {
        let nblocks = assignment.iter().max().unwrap() + 1;
        for mk in masks[..nblocks].iter_mut() {
            *mk = 0;
        }
        for (j, &a) in assignment.iter().enumerate() {
            masks[a] |= 1 << j;
        }
        let mut t = 0.0;
        for gi in g_pi.iter_mut() {
            *gi = 0.0;
        }
        for &mk in &masks[..nblocks] {
            t += ln_mu[mk as usize];
            for i in 0..p {
                g_pi[i] += grads[mk as usize][i];
            }
        }
        if t == f64::NEG_INFINITY {
            return;
        }
        if t <= run_max {
            let w = (t - run_max).exp();
            denom += w;
            for i in 0..p {
                numer[i] += w * g_pi[i];
            }
        } else {
            let scale = if run_max.is_finite() { (run_max - t).exp() } else { 0.0 };
            denom = denom * scale + 1.0;
            for i in 0..p {
                numer[i] = numer[i] * scale + g_pi[i];
            }
            run_max = t;
        }
    });
    if denom > 0.0 {
        for i in 0..p {
            out[i] += numer[i] / denom;
        }
    }
    Ok(out)
}
