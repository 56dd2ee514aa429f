//! `maxstable`: simulate, fit and diagnose max-stable models from the
//! command line.
//!
//! Every command is driven by a JSON config (`--config`), is deterministic
//! given that config (seeds live in the config, never the clock), and
//! embeds the resolved config plus the crate version in its outputs.
//!
//! Exit codes: 0 success, 1 input/configuration error, 2 fit did not
//! converge (the report is still written).

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{RunConfig, SCHEMA_VERSION};
use maxstable::estimation::{fit, fit_smle, Dataset, FitOptions, FitReport};
use maxstable::likelihood::LikelihoodKind;
use maxstable::mu::{build_strategy, default_strategy, MuOptions, MuStrategy};
use maxstable::pipeline::{
    block_maxima_with_occurrence, censor_sample, cluster_components, hill_transform,
    kendall_tau_matrix, rank_pareto_transform, ClusterFeatures, RawMatrix,
};
use maxstable::simulate::{sample_max_stable, sample_mda, SimConfig};
use maxstable::spectral::SpectralModel;

#[derive(Parser)]
#[command(name = "maxstable", version, about = "Likelihood inference for max-stable models")]
struct Cli {
    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the configured model and write it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Transform the data as configured and fit the chosen likelihood.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override the initial parameter values, comma separated.
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
    },
    /// Emit dependence diagnostics (Kendall tau, clustering suggestion,
    /// exceedance-pattern frequencies, Hill fits) as JSON.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("maxstable: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Simulate { config } => cmd_simulate(config),
        Command::Fit { config, init } => cmd_fit(config, init.clone()),
        Command::Diagnose { config } => cmd_diagnose(config),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("maxstable: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn build_model(
    cfg: &RunConfig,
) -> Result<(maxstable::estimation::ModelTemplate, Vec<f64>, SpectralModel)> {
    let (template, theta) = cfg.model.template()?;
    let model = template.build(&theta)?;
    Ok((template, theta, model))
}

fn strategy_for(cfg: &RunConfig, model: &SpectralModel) -> Result<std::sync::Arc<dyn MuStrategy>> {
    let opts: MuOptions = cfg.mu.as_ref().map(|m| m.to_options()).unwrap_or_default();
    match cfg.mu.as_ref().and_then(|m| m.strategy.as_deref()) {
        Some(name) => Ok(build_strategy(name, &opts)?),
        None => Ok(default_strategy(model, &opts)),
    }
}

fn cmd_simulate(path: &PathBuf) -> Result<ExitCode> {
    let cfg = RunConfig::load(path)?;
    let sim = cfg.sim.clone().context("simulate needs a `sim` section")?;
    let (_, _, model) = build_model(&cfg)?;

    let mut sc = SimConfig::new(model, sim.n, sim.seed)?;
    if let Some(mean) = sim.noise_exp_mean {
        sc = sc.with_noise(mean)?;
    }
    if let Some(tr) = sim.truncation {
        sc = sc.with_truncation(tr)?;
    }
    let (data, trunc_bound, generator) = match sim.generator.as_str() {
        "mda" => {
            let d = sample_mda(&sc)?;
            (d, None, "mda")
        }
        "max-stable" => {
            let (d, bound) = sample_max_stable(&sc)?;
            (d, Some(bound), "max-stable")
        }
        other => bail!("unknown generator `{other}` (use mda | max-stable)"),
    };
    data.to_csv(&cfg.io.data_csv)?;

    let sidecar = json!({
        "schema": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "generator": generator,
        "seed": sim.seed,
        "n": data.nrows(),
        "m": data.ncols(),
        "truncation_error_bound": trunc_bound,
        "config": cfg,
    });
    let meta_path = cfg.io.data_csv.with_extension("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&sidecar)?)?;
    println!(
        "wrote {} ({} x {}) and {}",
        cfg.io.data_csv.display(),
        data.nrows(),
        data.ncols(),
        meta_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn apply_transform(
    cfg: &RunConfig,
    data: RawMatrix,
) -> Result<(RawMatrix, Option<serde_json::Value>, bool)> {
    match cfg.transform.as_ref().map(|t| t.kind.as_str()) {
        None | Some("none") => Ok((data, None, false)),
        Some("rank") => Ok((rank_pareto_transform(&data)?, None, true)),
        Some("hill") => {
            let k = cfg
                .transform
                .as_ref()
                .and_then(|t| t.hill_k)
                .context("hill transform needs `hill_k`")?;
            let (out, fit) = hill_transform(&data, k)?;
            let meta = json!({"alpha_hat": fit.alpha_hat, "u_hat": fit.u_hat, "k": fit.k});
            Ok((out, Some(meta), true))
        }
        Some(other) => bail!("unknown transform `{other}` (use none | rank | hill)"),
    }
}

fn cmd_fit(path: &PathBuf, init_override: Option<Vec<f64>>) -> Result<ExitCode> {
    let cfg = RunConfig::load(path)?;
    let raw = RawMatrix::from_csv(&cfg.io.data_csv)
        .with_context(|| format!("cannot read data {}", cfg.io.data_csv.display()))?;
    let (template, model_theta, model) = build_model(&cfg)?;
    if raw.ncols() != template.dim() {
        bail!("data has {} columns but the model has dimension {}", raw.ncols(), template.dim());
    }

    let (data, hill_meta, margins_estimated) = apply_transform(&cfg, raw)?;
    let lik_cfg = cfg.likelihood.clone().context("fit needs a `likelihood` section")?;
    let kind = lik_cfg.kind(template.dim(), &cfg.model)?;

    let dataset = match &kind {
        LikelihoodKind::CensoredExceedance => {
            let k = lik_cfg.k.context("censored likelihood needs `k` (threshold count)")?;
            Dataset::Exceedances(censor_sample(&data, k)?)
        }
        LikelihoodKind::MaximaOccurrence => {
            let k = lik_cfg.k.context("maxima-occurrence likelihood needs `k` (block count)")?;
            Dataset::BlockMaxima(block_maxima_with_occurrence(&data, k)?)
        }
        _ => Dataset::Maxima(data),
    };

    let fit_cfg = cfg.fit.clone();
    let theta0 = init_override
        .or_else(|| fit_cfg.as_ref().and_then(|f| f.init.clone()))
        .unwrap_or(model_theta);
    let mut opts = FitOptions { margins_estimated, ..Default::default() };
    if let Some(f) = &fit_cfg {
        opts.compute_covariance = f.covariance;
        if let Some(o) = &f.optimizer {
            opts.optimizer = o.to_options();
        }
    }

    let report: FitReport = match fit_cfg.as_ref().and_then(|f| f.smle.as_ref()) {
        Some(smle) => {
            if !matches!(kind, LikelihoodKind::Full) {
                bail!("SMLE is defined for the full likelihood kind");
            }
            fit_smle(&dataset, &template, smle.s, smle.seed, &theta0, &opts)?
        }
        None => {
            let strategy = strategy_for(&cfg, &model)?;
            fit(&dataset, &template, &kind, &theta0, strategy.as_ref(), &opts)?
        }
    };

    let out = json!({
        "schema": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "hill": hill_meta,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&out)?;
    match &cfg.io.out_json {
        Some(p) => std::fs::write(p, &text)?,
        None => println!("{text}"),
    }
    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("maxstable: fit did not converge ({})", report.reason);
        Ok(ExitCode::from(2))
    }
}

fn cmd_diagnose(path: &PathBuf) -> Result<ExitCode> {
    let cfg = RunConfig::load(path)?;
    let raw = RawMatrix::from_csv(&cfg.io.data_csv)
        .with_context(|| format!("cannot read data {}", cfg.io.data_csv.display()))?;
    let d = cfg.diagnose.clone().unwrap_or(config::DiagnoseConfig {
        norm_threshold: None,
        max_block: None,
        k: None,
        hill_k: None,
    });
    let m = raw.ncols();
    let n = raw.nrows();

    let tau = kendall_tau_matrix(&raw, d.norm_threshold.unwrap_or(0.0))?;
    let clustering: Vec<Vec<usize>> = if m == 1 {
        vec![vec![1usize]]
    } else {
        let p = cluster_components(
            ClusterFeatures::Similarity(&tau),
            d.max_block.unwrap_or(5).max(1),
            0,
        )?;
        p.blocks().iter().map(|b| b.members().map(|j| j + 1).collect()).collect()
    };

    // exceedance-pattern frequencies on the rank-Pareto scale
    let k = d.k.unwrap_or_else(|| (n / 10).max(1));
    let pareto = rank_pareto_transform(&raw)?;
    let recs = censor_sample(&pareto, k)?;
    let mut pattern_counts: std::collections::BTreeMap<String, usize> =
        std::collections::BTreeMap::new();
    for rec in &recs {
        let label = rec
            .exceed_set()
            .members()
            .map(|j| (j + 1).to_string())
            .collect::<Vec<_>>()
            .join(",");
        *pattern_counts.entry(format!("{{{label}}}")).or_insert(0) += 1;
    }
    let n_exc = recs.len().max(1);
    let p_b: std::collections::BTreeMap<String, f64> =
        pattern_counts.iter().map(|(k2, &c)| (k2.clone(), c as f64 / n_exc as f64)).collect();

    let hill = match d.hill_k {
        Some(hk) => {
            let (_, fitres) = hill_transform(&raw, hk)?;
            Some(json!({"alpha_hat": fitres.alpha_hat, "u_hat": fitres.u_hat, "k": fitres.k}))
        }
        None => None,
    };

    let out = json!({
        "schema": SCHEMA_VERSION,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "kendall_tau": tau,
        "suggested_clustering": clustering,
        "exceedance_threshold_count": k,
        "n_exceedances": recs.len(),
        "p_b_frequencies": p_b,
        "hill": hill,
    });
    let text = serde_json::to_string_pretty(&out)?;
    match &cfg.io.out_json {
        Some(p) => std::fs::write(p, &text)?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
