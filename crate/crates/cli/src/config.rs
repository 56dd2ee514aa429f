//! The JSON run-configuration schema.
//!
//! Strict parsing: unknown keys are rejected, and the `schema` version must
//! match. Component and cluster indices are 1-based in files, converted at
//! this boundary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use maxstable::combinatorics::{ComponentSet, Partition};
use maxstable::estimation::{ClusterTemplate, ModelTemplate, OptimizerOptions};
use maxstable::likelihood::LikelihoodKind;
use maxstable::pipeline::{cluster_components, ClusterFeatures};
use maxstable::spatial::SiteSet;
use maxstable::spectral::{CopulaFamily, MarginFamily};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<MuConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<LikelihoodConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseConfig>,
    pub io: IoConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("config {} does not match the schema", path.display()))?;
        if cfg.schema != SCHEMA_VERSION {
            bail!("config schema version {} unsupported (expected {SCHEMA_VERSION})", cfg.schema);
        }
        cfg.model.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ModelConfig {
    Gaussian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sites_csv: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sites: Option<Vec<[f64; 2]>>,
        matern: MaternConfig,
    },
    Lognormal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sites_csv: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sites: Option<Vec<[f64; 2]>>,
        matern: MaternConfig,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
    Clustered {
        clusters: Vec<ClusterConfig>,
    },
}

fn default_sigma2() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MaternConfig {
    pub c: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    /// 1-based component indices.
    pub members: Vec<usize>,
    pub copula: CopulaConfig,
    pub margin: MarginConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaConfig {
    pub family: String,
    pub theta: f64,
    #[serde(default = "default_true")]
    pub free: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MarginConfig {
    pub family: String,
    pub alpha: f64,
    #[serde(default = "default_true")]
    pub free: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Gaussian { sites_csv, sites, .. }
            | ModelConfig::Lognormal { sites_csv, sites, .. } => {
                if sites_csv.is_none() && sites.is_none() {
                    bail!("model needs either sites_csv or inline sites");
                }
            }
            ModelConfig::Clustered { clusters } => {
                if clusters.is_empty() {
                    bail!("clustered model needs at least one cluster");
                }
            }
        }
        Ok(())
    }

    fn load_sites(
        sites_csv: &Option<PathBuf>,
        sites: &Option<Vec<[f64; 2]>>,
    ) -> Result<SiteSet> {
        if let Some(path) = sites_csv {
            Ok(SiteSet::from_csv(path)?)
        } else {
            Ok(SiteSet::new(sites.clone().unwrap())?)
        }
    }

    /// Build the template plus the parameter values embedded in this config
    /// (the simulation truth / fit defaults).
    pub fn template(&self) -> Result<(ModelTemplate, Vec<f64>)> {
        match self {
            ModelConfig::Gaussian { sites_csv, sites, matern } => {
                let sites = Self::load_sites(sites_csv, sites)?;
                Ok((ModelTemplate::GaussianMatern { sites }, vec![matern.c, matern.nu]))
            }
            ModelConfig::Lognormal { sites_csv, sites, matern, sigma2 } => {
                let sites = Self::load_sites(sites_csv, sites)?;
                Ok((
                    ModelTemplate::LogNormalMatern { sites, sigma2: *sigma2 },
                    vec![matern.c, matern.nu],
                ))
            }
            ModelConfig::Clustered { clusters } => {
                let m = clusters.iter().flat_map(|c| c.members.iter()).copied().max().unwrap_or(0);
                let mut templates = Vec::with_capacity(clusters.len());
                let mut theta = Vec::new();
                for cl in clusters {
                    let members0: Vec<usize> = cl
                        .members
                        .iter()
                        .map(|&j| {
                            if j == 0 {
                                bail!("cluster members are 1-based; got 0")
                            } else {
                                Ok(j - 1)
                            }
                        })
                        .collect::<Result<_>>()?;
                    let copula = match cl.copula.family.as_str() {
                        "gumbel" | "independence" => CopulaFamily::Gumbel { theta: cl.copula.theta },
                        "clayton" => CopulaFamily::Clayton { theta: cl.copula.theta },
                        other => bail!("unknown copula family `{other}`"),
                    };
                    let margin = match cl.margin.family.as_str() {
                        "lognormal" => MarginFamily::LogNormal { alpha: cl.margin.alpha },
                        "weibull" => MarginFamily::Weibull { alpha: cl.margin.alpha },
                        "frechet" => MarginFamily::Frechet { alpha: cl.margin.alpha },
                        other => bail!("unknown margin family `{other}`"),
                    };
                    if cl.copula.free {
                        theta.push(copula.theta());
                    }
                    if cl.margin.free {
                        theta.push(margin.alpha());
                    }
                    templates.push(ClusterTemplate {
                        members: ComponentSet::from_members(&members0, m)?,
                        copula,
                        copula_free: cl.copula.free,
                        margin,
                        margin_free: cl.margin.free,
                    });
                }
                Ok((ModelTemplate::Clustered { clusters: templates }, theta))
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MuConfig {
    /// One of the registered strategy names; defaults to the kind-matched
    /// strategy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_max_panels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mvn_target_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mvn_seed: Option<u64>,
}

impl MuConfig {
    pub fn to_options(&self) -> maxstable::mu::MuOptions {
        let mut opts = maxstable::mu::MuOptions::default();
        if let Some(v) = self.quad_rel_tol {
            opts.quad.rel_tol = v;
        }
        if let Some(v) = self.quad_max_panels {
            opts.quad.max_panels = v;
        }
        if let Some(v) = self.mvn_target_err {
            opts.mvn.target_err = v;
        }
        if let Some(v) = self.mvn_seed {
            opts.mvn.seed = v;
        }
        opts
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodConfig {
    /// full | partition | pairwise | censored | maxima-occurrence
    pub kind: String,
    /// Threshold count (censored) or block count (maxima-occurrence).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Explicit clustering, 1-based member lists (partition kind).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustering: Option<Vec<Vec<usize>>>,
    /// Derive the clustering from the model's sites with this block cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_max_block: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_seed: Option<u64>,
    /// Keep the paper's |B| block weights (default true).
    #[serde(default = "default_true")]
    pub weighted: bool,
}

impl LikelihoodConfig {
    pub fn kind(&self, m: usize, model_cfg: &ModelConfig) -> Result<LikelihoodKind> {
        match self.kind.as_str() {
            "full" => Ok(LikelihoodKind::Full),
            "pairwise" => Ok(LikelihoodKind::Pairwise),
            "censored" => Ok(LikelihoodKind::CensoredExceedance),
            "maxima-occurrence" => Ok(LikelihoodKind::MaximaOccurrence),
            "partition" => {
                let clustering = if let Some(lists) = &self.clustering {
                    let blocks = lists
                        .iter()
                        .map(|list| {
                            let members0: Vec<usize> = list
                                .iter()
                                .map(|&j| {
                                    if j == 0 {
                                        bail!("clustering members are 1-based; got 0")
                                    } else {
                                        Ok(j - 1)
                                    }
                                })
                                .collect::<Result<_>>()?;
                            Ok(ComponentSet::from_members(&members0, m)?)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Partition::new(blocks, m)?
                } else if let Some(cap) = self.cluster_max_block {
                    let (sites_csv, sites) = match model_cfg {
                        ModelConfig::Gaussian { sites_csv, sites, .. }
                        | ModelConfig::Lognormal { sites_csv, sites, .. } => (sites_csv, sites),
                        ModelConfig::Clustered { .. } => {
                            bail!("cluster_max_block needs a site-based model")
                        }
                    };
                    let sites = ModelConfig::load_sites(sites_csv, sites)?;
                    cluster_components(
                        ClusterFeatures::Sites(&sites),
                        cap,
                        self.cluster_seed.unwrap_or(0),
                    )?
                } else {
                    bail!("partition likelihood needs `clustering` or `cluster_max_block`")
                };
                Ok(LikelihoodKind::PartitionComposite { clustering, weighted: self.weighted })
            }
            other => bail!("unknown likelihood kind `{other}`"),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    /// none | rank | hill
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hill_k: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub covariance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smle: Option<SmleConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
}

impl OptimizerConfig {
    pub fn to_options(&self) -> OptimizerOptions {
        let mut o = OptimizerOptions::default();
        if let Some(v) = self.max_iters {
            o.max_iters = v;
        }
        if let Some(v) = self.init_scale {
            o.init_scale = v;
        }
        if let Some(v) = self.f_tol {
            o.f_tol = v;
        }
        if let Some(v) = self.x_tol {
            o.x_tol = v;
        }
        if let Some(v) = self.restarts {
            o.restarts = v;
        }
        o
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SmleConfig {
    pub s: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// mda | max-stable
    pub generator: String,
    pub n: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_exp_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_block: Option<usize>,
    /// Threshold count for the exceedance-pattern frequencies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hill_k: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub data_csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_json: Option<PathBuf>,
}
