//! Acceptance suite: one test per criterion, each printing a summary line.
//!
//! The simulation studies run at desk scale on a single core; the heavy
//! replication studies (criteria 7-10) take minutes each by design.

use maxstable::combinatorics::{bell_number, enumerate_partitions, ComponentSet, Partition};
use maxstable::estimation::{
    eval_dataset, fit, fit_smle, ClusterTemplate, Dataset, FitOptions, ModelTemplate,
    OptimizerOptions,
};
use maxstable::gaussian::{mvn_cdf, mvn_orthant_moment, GaussianSpec};
use maxstable::likelihood::{
    loglik_censored, loglik_full, loglik_maxima_occurrence, score, ExceedanceRecord,
    LikelihoodKind, Observation,
};
use maxstable::mu::{
    build_strategy, default_strategy, grad_log_mu, mu, v_star, FdModels, MuOptions, MuStrategy,
    QuadOptions, QuadratureMu,
};
use maxstable::pipeline::{censor_sample, cluster_components, rank_pareto_transform,
    ClusterFeatures, RawMatrix};
use maxstable::simulate::{sample_max_stable, sample_mda, SimConfig};
use maxstable::spatial::{MaternParams, SiteSet};
use maxstable::spectral::{
    ArchimedeanClusterSpec, CopulaFamily, MarginFamily, MvnParams, SpectralModel, ThetaParam,
    ThetaVector, Transform,
};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

fn quad() -> QuadratureMu {
    QuadratureMu::new(QuadOptions::default(), MvnParams::default())
}

fn gaussian_m3() -> SpectralModel {
    let sites = SiteSet::new(vec![[0.0, 0.0], [0.8, 0.4], [1.6, 1.1]]).unwrap();
    let p = MaternParams::new(1.0, 1.0).unwrap();
    SpectralModel::gaussian_from_sites(&sites, &p).unwrap()
}

fn gaussian_corr(m: usize, rho: f64) -> SpectralModel {
    let corr = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho });
    SpectralModel::gaussian_from_correlation(corr).unwrap()
}

fn lognormal_m(m: usize) -> SpectralModel {
    let cov = DMatrix::from_fn(m, m, |i, j| if i == j { 0.8 } else { 0.3 });
    SpectralModel::lognormal_from_cov(cov).unwrap()
}

fn clustered_m3() -> SpectralModel {
    SpectralModel::clustered(vec![
        ArchimedeanClusterSpec::new(
            ComponentSet::from_members(&[0, 1], 3).unwrap(),
            CopulaFamily::Gumbel { theta: 1.7 },
            MarginFamily::LogNormal { alpha: 0.9 },
        )
        .unwrap(),
        ArchimedeanClusterSpec::new(
            ComponentSet::from_members(&[2], 3).unwrap(),
            CopulaFamily::Clayton { theta: 0.4 },
            MarginFamily::Weibull { alpha: 1.5 },
        )
        .unwrap(),
    ])
    .unwrap()
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

fn default_for(model: &SpectralModel) -> std::sync::Arc<dyn MuStrategy> {
    default_strategy(model, &MuOptions::default())
}

fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Graded panel edges on (0,1), geometric into both endpoints.
fn graded_edges(depth: usize) -> Vec<f64> {
    let mut edges = vec![0.0];
    for k in (1..=depth).rev() {
        edges.push(0.5f64.powi(k as i32));
    }
    for k in 1..=depth {
        edges.push(1.0 - 0.5f64.powi(k as i32 + 1));
    }
    edges.push(1.0);
    edges
}

const GL8_X: [f64; 4] =
    [0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363];
const GL8_W: [f64; 4] =
    [0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];

/// 1-D integral of `f` over (0, inf) via x = u/(1-u) on graded panels.
fn integrate_halfline<F: Fn(f64) -> f64>(f: &F, depth: usize) -> f64 {
    let edges = graded_edges(depth);
    let mut total = 0.0;
    for w in edges.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[0] + w[1]);
        for i in 0..4 {
            for s in [-1.0, 1.0] {
                let u: f64 = mid + s * half * GL8_X[i];
                if u <= 0.0 || u >= 1.0 {
                    continue;
                }
                let x = u / (1.0 - u);
                let v = f(x) / ((1.0 - u) * (1.0 - u));
                if v.is_finite() {
                    total += GL8_W[i] * half * v;
                }
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_euler_identity_vs_monte_carlo() {
    // V*(z) = sum_l z_l mu({l}; z) vs an independent 1e6-draw Monte Carlo of
    // E[max z_j^{-1} U_j^+], 20 random z per model kind, 3 MC SE tolerance.
    let n_draws = 1_000_000;
    let kinds: Vec<(&str, SpectralModel)> = vec![
        ("gaussian", gaussian_m3()),
        ("lognormal", lognormal_m(3)),
        ("clustered", clustered_m3()),
    ];
    let mut worst = 0.0f64;
    for (name, model) in &kinds {
        let strategy = default_for(model);
        let samples = model.sample_spectral(n_draws, 2024).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| 0.5 + 2.5 * rng.random::<f64>()).collect();
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            for i in 0..n_draws {
                let mut mx: f64 = 0.0;
                for j in 0..3 {
                    mx = mx.max(samples[(i, j)].max(0.0) / z[j]);
                }
                acc += mx;
                acc2 += mx * mx;
            }
            let mc = acc / n_draws as f64;
            let var = acc2 / n_draws as f64 - mc * mc;
            let se = (var / n_draws as f64).sqrt();
            let vq = v_star(model, &z, strategy.as_ref()).unwrap();
            let dev = (vq - mc).abs() / se;
            worst = worst.max(dev);
            assert!(
                dev <= 3.0,
                "{name}: z = {z:?}: V* {vq} vs MC {mc} ({dev:.2} SE)"
            );
        }
    }
    println!("criterion 01 PASS: Euler identity within 3 MC SE (worst {worst:.2} SE)");
}

#[test]
fn criterion_02_mu_is_derivative_of_v_star() {
    // mu(B; z) = -d^{|B|} V* / dz_B by central differences, |B| in {1, 2},
    // 10 random points per kind, relative tolerance 1e-3.
    let kinds: Vec<(&str, SpectralModel)> = vec![
        ("gaussian", gaussian_m3()),
        ("lognormal", lognormal_m(3)),
        ("clustered", clustered_m3()),
    ];
    let q = quad();
    let mut worst = 0.0f64;
    for (name, model) in &kinds {
        let mut rng = ChaCha12Rng::seed_from_u64(88);
        for _ in 0..10 {
            let z: Vec<f64> = (0..3).map(|_| 0.7 + 1.8 * rng.random::<f64>()).collect();
            let vs = |zv: &[f64]| v_star(model, zv, &q).unwrap();

            // |B| = 1 at component 0
            let h = 1e-4 * z[0];
            let mut zp = z.clone();
            zp[0] += h;
            let mut zm = z.clone();
            zm[0] -= h;
            let fd = -(vs(&zp) - vs(&zm)) / (2.0 * h);
            let b = ComponentSet::singleton(0, 3);
            let m1 = mu(model, &b, &z, &q).unwrap();
            let rel = ((m1 - fd) / fd).abs();
            worst = worst.max(rel);
            assert!(rel < 1e-3, "{name}: singleton derivative rel err {rel}");

            // |B| = 2 at components (0, 1): mixed second difference
            let h0 = 1e-3 * z[0];
            let h1 = 1e-3 * z[1];
            let mut zpp = z.clone();
            zpp[0] += h0;
            zpp[1] += h1;
            let mut zpm = z.clone();
            zpm[0] += h0;
            zpm[1] -= h1;
            let mut zmp = z.clone();
            zmp[0] -= h0;
            zmp[1] += h1;
            let mut zmm = z.clone();
            zmm[0] -= h0;
            zmm[1] -= h1;
            let fd2 = -(vs(&zpp) - vs(&zpm) - vs(&zmp) + vs(&zmm)) / (4.0 * h0 * h1);
            let b2 = ComponentSet::from_members(&[0, 1], 3).unwrap();
            let m2 = mu(model, &b2, &z, &q).unwrap();
            let rel2 = ((m2 - fd2) / fd2).abs();
            worst = worst.max(rel2);
            assert!(rel2 < 1e-3, "{name}: pair derivative rel err {rel2}");
        }
    }
    println!("criterion 02 PASS: mu matches -d^|B| V*/dz_B (worst rel {worst:.2e})");
}

#[test]
fn criterion_03_schlather_bivariate_closed_form() {
    let q = quad();
    let mut worst = 0.0f64;
    for &rho in &[0.0, 0.5, 0.9] {
        let model = gaussian_corr(2, rho);
        let v = v_star(&model, &[1.0, 1.0], &q).unwrap();
        let want = 1.0 + ((1.0 - rho) / 2.0).sqrt();
        let err = (v - want).abs();
        worst = worst.max(err);
        assert!(err < 1e-4, "rho {rho}: V* {v} vs {want}");
    }
    println!("criterion 03 PASS: V*(1,1) = 1 + sqrt((1-rho)/2) (worst abs {worst:.2e})");
}

#[test]
fn criterion_04_density_normalizations() {
    // (a) double integral of exp(l1) over the positive quadrant = 1 (m = 2);
    // (b) censored total mass sum_B int_{A_B} exp(l_X*) = 1; both 1e-3.
    let kinds: Vec<(&str, SpectralModel, std::sync::Arc<dyn MuStrategy>)> = vec![
        ("gaussian", gaussian_corr(2, 0.5), default_for(&gaussian_corr(2, 0.5))),
        ("lognormal", lognormal_m(2), default_for(&lognormal_m(2))),
        (
            "clustered",
            SpectralModel::clustered(vec![ArchimedeanClusterSpec::new(
                ComponentSet::full(2),
                CopulaFamily::Gumbel { theta: 1.7 },
                MarginFamily::LogNormal { alpha: 0.9 },
            )
            .unwrap()])
            .unwrap(),
            default_for(
                &SpectralModel::clustered(vec![ArchimedeanClusterSpec::new(
                    ComponentSet::full(2),
                    CopulaFamily::Gumbel { theta: 1.7 },
                    MarginFamily::LogNormal { alpha: 0.9 },
                )
                .unwrap()])
                .unwrap(),
            ),
        ),
    ];
    for (name, model, strategy) in &kinds {
        // (a) full-density mass via tensor quadrature, z = u/(1-u) per axis
        let edges = graded_edges(11);
        let mut nodes: Vec<(f64, f64)> = Vec::new();
        for w in edges.windows(2) {
            let half = 0.5 * (w[1] - w[0]);
            let mid = 0.5 * (w[0] + w[1]);
            for i in 0..4 {
                for s in [-1.0, 1.0] {
                    let u: f64 = mid + s * half * GL8_X[i];
                    if u > 0.0 && u < 1.0 {
                        nodes.push((u, GL8_W[i] * half));
                    }
                }
            }
        }
        let mut mass = 0.0;
        for &(u1, w1) in &nodes {
            let z1 = u1 / (1.0 - u1);
            let jac1 = w1 / ((1.0 - u1) * (1.0 - u1));
            for &(u2, w2) in &nodes {
                let z2 = u2 / (1.0 - u2);
                let jac2 = w2 / ((1.0 - u2) * (1.0 - u2));
                let l1 = loglik_full(model, &[z1, z2], strategy.as_ref()).unwrap();
                if l1.is_finite() {
                    mass += jac1 * jac2 * l1.exp();
                }
            }
        }
        assert!((mass - 1.0).abs() < 1e-3, "{name}: full-density mass {mass}");

        // (b) censored total mass over the three exceedance faces
        let ln_norm =
            maxstable::likelihood::ln_vstar_at_e(model, strategy.as_ref()).unwrap();
        let face = |which: usize| -> f64 {
            integrate_halfline(
                &|t: f64| {
                    let x = match which {
                        0 => vec![1.0 + t, 1.0],
                        _ => vec![1.0, 1.0 + t],
                    };
                    let rec = ExceedanceRecord::new(x).unwrap();
                    loglik_censored(model, &rec, strategy.as_ref(), Some(ln_norm))
                        .unwrap()
                        .exp()
                },
                11,
            )
        };
        let interior = {
            let edges = graded_edges(10);
            let mut nodes2: Vec<(f64, f64)> = Vec::new();
            for w in edges.windows(2) {
                let half = 0.5 * (w[1] - w[0]);
                let mid = 0.5 * (w[0] + w[1]);
                for i in 0..4 {
                    for s in [-1.0, 1.0] {
                        let u: f64 = mid + s * half * GL8_X[i];
                        if u > 0.0 && u < 1.0 {
                            nodes2.push((u, GL8_W[i] * half));
                        }
                    }
                }
            }
            let mut total = 0.0;
            for &(u1, w1) in &nodes2 {
                let t1 = u1 / (1.0 - u1);
                let j1 = w1 / ((1.0 - u1) * (1.0 - u1));
                for &(u2, w2) in &nodes2 {
                    let t2 = u2 / (1.0 - u2);
                    let j2 = w2 / ((1.0 - u2) * (1.0 - u2));
                    let rec = ExceedanceRecord::new(vec![1.0 + t1, 1.0 + t2]).unwrap();
                    let l = loglik_censored(model, &rec, strategy.as_ref(), Some(ln_norm))
                        .unwrap();
                    if l.is_finite() {
                        total += j1 * j2 * l.exp();
                    }
                }
            }
            total
        };
        let total = face(0) + face(1) + interior;
        assert!((total - 1.0).abs() < 1e-3, "{name}: censored total mass {total}");
        println!("criterion 04 [{name}]: density mass 1{:+.2e}, censored mass 1{:+.2e}", mass - 1.0, total - 1.0);
    }
    println!("criterion 04 PASS: density and censored-mass normalizations within 1e-3");
}

#[test]
fn criterion_05_occurrence_decomposition() {
    // sum over partitions of exp(l_(M,R)) = exp(l1), rel 1e-6, m in {2,3,4},
    // 5 random z each.
    let q = quad();
    let mut worst = 0.0f64;
    for m in [2usize, 3, 4] {
        let model = gaussian_corr(m, 0.4);
        let mut rng = ChaCha12Rng::seed_from_u64(m as u64);
        for _ in 0..5 {
            let z: Vec<f64> = (0..m).map(|_| 0.6 + 2.0 * rng.random::<f64>()).collect();
            let l1 = loglik_full(&model, &z, &q).unwrap();
            let mut total = 0.0;
            for pi in enumerate_partitions(m).unwrap() {
                let rec =
                    maxstable::likelihood::BlockMaximaRecord::new(z.clone(), pi).unwrap();
                total += loglik_maxima_occurrence(&model, &rec, &q).unwrap().exp();
            }
            let rel = ((total - l1.exp()) / l1.exp()).abs();
            worst = worst.max(rel);
            assert!(rel < 1e-6, "m={m}: decomposition rel err {rel}");
        }
    }
    println!("criterion 05 PASS: occurrence partitions sum to the full density (worst rel {worst:.2e})");
}

#[test]
fn criterion_06_cross_strategy_agreement() {
    // quadrature vs analytic reductions, rel 1e-4, 50 random (B, z), m <= 4,
    // Gaussian and Log-normal kinds.
    let q = quad();
    let opts = MuOptions::default();
    let ag = build_strategy("analytic-gaussian", &opts).unwrap();
    let al = build_strategy("analytic-lognormal", &opts).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let m = 2 + (trial % 3);
        let rho = 0.2 + 0.5 * rng.random::<f64>();
        let mask = 1 + (rng.random::<u32>() % ((1 << m) - 1));
        let b = ComponentSet::from_mask(mask, m).unwrap();
        let z: Vec<f64> = (0..m).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect();

        let gm = gaussian_corr(m, rho);
        let a = mu(&gm, &b, &z, &q).unwrap();
        let bv = mu(&gm, &b, &z, ag.as_ref()).unwrap();
        let rel = ((a - bv) / a).abs();
        worst = worst.max(rel);
        assert!(rel < 1e-4, "gaussian m={m} B={b:?}: quad {a} vs analytic {bv} (rel {rel})");

        let cov = DMatrix::from_fn(m, m, |i, j| if i == j { 0.9 } else { 0.9 * rho });
        let lm = SpectralModel::lognormal_from_cov(cov).unwrap();
        let a = mu(&lm, &b, &z, &q).unwrap();
        let bv = mu(&lm, &b, &z, al.as_ref()).unwrap();
        let rel = ((a - bv) / a).abs();
        worst = worst.max(rel);
        assert!(rel < 1e-4, "lognormal m={m} B={b:?}: quad {a} vs analytic {bv} (rel {rel})");
    }
    println!("criterion 06 PASS: cross-strategy mu agreement (worst rel {worst:.2e})");
}

#[test]
fn criterion_07_censored_mle_recovery_table2_scale() {
    // Gaussian-spectral MDA data, m = 5, n = 1000, k/n = 0.10, truth
    // (c, nu) = (1, 1); over 20 replicates the mean censored-MLE lies within
    // 0.20 of truth and the SDs are at most 3x the paper's m = 20 values
    // (0.10 for c, 0.06 for nu).
    let n = 1000;
    let k = 100;
    let n_reps = 20;
    let opts = MuOptions::default();
    let strategy = build_strategy("analytic-gaussian", &opts).unwrap();
    let mut c_hats = Vec::new();
    let mut nu_hats = Vec::new();
    for rep in 0..n_reps {
        // the paper's site density (20 sites on [0,2]^2), desk-scaled to
        // m = 5 on [0,1]^2 so pair distances stay comparable
        let sites = SiteSet::uniform_random(5, 1.0, 9_000 + rep).unwrap();
        let truth = MaternParams::new(1.0, 1.0).unwrap();
        let model = SpectralModel::gaussian_from_sites(&sites, &truth).unwrap();
        let cfg = SimConfig::new(model, n, 17_000 + rep).unwrap();
        let data = sample_mda(&cfg).unwrap();
        let recs = censor_sample(&data, k).unwrap();
        let dataset = Dataset::Exceedances(recs);
        let template = ModelTemplate::GaussianMatern { sites };
        let fit_opts = FitOptions {
            optimizer: OptimizerOptions {
                restarts: 0,
                max_iters: 150,
                f_tol: 1e-7,
                x_tol: 1e-5,
                ..Default::default()
            },
            compute_covariance: false,
            margins_estimated: false,
        };
        let report = fit(
            &dataset,
            &template,
            &LikelihoodKind::CensoredExceedance,
            &[1.0, 1.0],
            strategy.as_ref(),
            &fit_opts,
        )
        .unwrap();
        c_hats.push(report.theta_hat[0]);
        nu_hats.push(report.theta_hat[1]);
    }
    let (mc, mnu) = (mean(&c_hats), mean(&nu_hats));
    let (sc, snu) = (sd(&c_hats), sd(&nu_hats));
    println!(
        "criterion 07: c_hat {mc:.3} ({sc:.3}), nu_hat {mnu:.3} ({snu:.3}) over {n_reps} reps"
    );
    assert!((mc - 1.0).abs() < 0.20, "mean c {mc}");
    assert!((mnu - 1.0).abs() < 0.20, "mean nu {mnu}");
    assert!(sc <= 0.30, "sd c {sc} > 3 x 0.10");
    assert!(snu <= 0.18, "sd nu {snu} > 3 x 0.06");
    println!("criterion 07 PASS: censored MLE recovers (c, nu) = (1, 1) at m = 5");
}

#[test]
fn criterion_08_partition_vs_pairwise_table1_scale() {
    // m = 10 sites, n = 40 approximate max-stable samples, truth
    // (c, nu) = (1, 2): both composite estimators within 3 empirical SE of
    // truth, and the partition estimator no noisier than pairwise for nu.
    let n_reps = 20;
    let opts = MuOptions::default();
    let analytic = build_strategy("analytic-gaussian", &opts).unwrap();
    let quadrature = build_strategy("quadrature", &opts).unwrap();
    let mut pc: Vec<[f64; 2]> = Vec::new();
    let mut pm: Vec<[f64; 2]> = Vec::new();
    for rep in 0..n_reps {
        let sites = SiteSet::uniform_random(10, 2.0, 30_000 + rep).unwrap();
        let truth = MaternParams::new(1.0, 2.0).unwrap();
        let model = SpectralModel::gaussian_from_sites(&sites, &truth).unwrap();
        let cfg = SimConfig::new(model, 40, 40_000 + rep).unwrap().with_truncation(1_000).unwrap();
        let (data, _) = sample_max_stable(&cfg).unwrap();
        let dataset = Dataset::Maxima(data);
        let clustering =
            cluster_components(ClusterFeatures::Sites(&sites), 5, 0).unwrap();
        let template = ModelTemplate::GaussianMatern { sites };
        let fit_opts = FitOptions {
            optimizer: OptimizerOptions {
                restarts: 0,
                max_iters: 150,
                f_tol: 1e-7,
                x_tol: 1e-5,
                ..Default::default()
            },
            compute_covariance: false,
            margins_estimated: false,
        };
        let rep_pc = fit(
            &dataset,
            &template,
            &LikelihoodKind::PartitionComposite { clustering, weighted: true },
            &[1.0, 2.0],
            analytic.as_ref(),
            &fit_opts,
        )
        .unwrap();
        pc.push([rep_pc.theta_hat[0], rep_pc.theta_hat[1]]);
        let rep_pm = fit(
            &dataset,
            &template,
            &LikelihoodKind::Pairwise,
            &[1.0, 2.0],
            quadrature.as_ref(),
            &fit_opts,
        )
        .unwrap();
        pm.push([rep_pm.theta_hat[0], rep_pm.theta_hat[1]]);
    }
    let stats = |xs: &[[f64; 2]], i: usize| {
        let v: Vec<f64> = xs.iter().map(|x| x[i]).collect();
        (mean(&v), sd(&v))
    };
    let (pc_c, pc_c_sd) = stats(&pc, 0);
    let (pc_nu, pc_nu_sd) = stats(&pc, 1);
    let (pm_c, pm_c_sd) = stats(&pm, 0);
    let (pm_nu, pm_nu_sd) = stats(&pm, 1);
    let se = |s: f64| s / (n_reps as f64).sqrt();
    println!(
        "criterion 08: MpcLE c {pc_c:.3} ({pc_c_sd:.3}) nu {pc_nu:.3} ({pc_nu_sd:.3}); \
         MpmLE c {pm_c:.3} ({pm_c_sd:.3}) nu {pm_nu:.3} ({pm_nu_sd:.3})"
    );
    assert!((pc_c - 1.0).abs() <= 3.0 * se(pc_c_sd), "MpcLE c mean {pc_c}");
    assert!((pc_nu - 2.0).abs() <= 3.0 * se(pc_nu_sd), "MpcLE nu mean {pc_nu}");
    assert!((pm_c - 1.0).abs() <= 3.0 * se(pm_c_sd), "MpmLE c mean {pm_c}");
    assert!((pm_nu - 2.0).abs() <= 3.0 * se(pm_nu_sd), "MpmLE nu mean {pm_nu}");
    assert!(pc_nu_sd <= pm_nu_sd, "partition nu SD {pc_nu_sd} vs pairwise {pm_nu_sd}");
    println!("criterion 08 PASS: composite estimators unbiased; partition at least as efficient for nu");
}

#[test]
fn criterion_09_clustered_step1_recovery() {
    // m = 12 (clusters 5/4/3), Gumbel(1.7)/Clayton(0.4)/Gumbel(1.2) with the
    // mean-one margins, n = 2500, rank-Pareto margins, threshold 10:
    // per-cluster step-1 estimates within 3 empirical SE of truth, 10 reps.
    let n = 2500;
    let k = n / 10;
    let n_reps = 10;
    let cluster_defs: Vec<(Vec<usize>, CopulaFamily, MarginFamily)> = vec![
        (
            (0..5).collect(),
            CopulaFamily::Gumbel { theta: 1.7 },
            MarginFamily::LogNormal { alpha: 0.9 },
        ),
        (
            (5..9).collect(),
            CopulaFamily::Clayton { theta: 0.4 },
            MarginFamily::Weibull { alpha: 1.5 },
        ),
        (
            (9..12).collect(),
            CopulaFamily::Gumbel { theta: 1.2 },
            MarginFamily::Frechet { alpha: 1.7 },
        ),
    ];
    let truth_model = SpectralModel::clustered(
        cluster_defs
            .iter()
            .map(|(members, cop, mar)| {
                ArchimedeanClusterSpec::new(
                    ComponentSet::from_members(members, 12).unwrap(),
                    *cop,
                    *mar,
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap();

    // estimates[cluster][param][rep]
    let mut estimates: Vec<[Vec<f64>; 2]> = vec![[Vec::new(), Vec::new()]; 3];
    let opts = MuOptions::default();
    for rep in 0..n_reps {
        let cfg = SimConfig::new(truth_model.clone(), n, 70_000 + rep)
            .unwrap()
            .with_noise(10.0)
            .unwrap();
        let raw = sample_mda(&cfg).unwrap();
        let pareto = rank_pareto_transform(&raw).unwrap();
        for (ci, (members, cop, mar)) in cluster_defs.iter().enumerate() {
            let mc = members.len();
            let cols: Vec<Vec<f64>> = (0..pareto.nrows())
                .map(|i| members.iter().map(|&j| pareto.get(i, j)).collect())
                .collect();
            let sub = RawMatrix::from_rows(cols).unwrap();
            let recs = censor_sample(&sub, k).unwrap();
            let dataset = Dataset::Exceedances(recs);
            let template = ModelTemplate::Clustered {
                clusters: vec![ClusterTemplate {
                    members: ComponentSet::full(mc),
                    copula: *cop,
                    copula_free: true,
                    margin: *mar,
                    margin_free: true,
                }],
            };
            let strategy = build_strategy("archimedean-quadrature", &opts).unwrap();
            let fit_opts = FitOptions {
                optimizer: OptimizerOptions {
                    restarts: 0,
                    max_iters: 120,
                    f_tol: 1e-7,
                    x_tol: 1e-5,
                    ..Default::default()
                },
                compute_covariance: false,
                margins_estimated: true,
            };
            let report = fit(
                &dataset,
                &template,
                &LikelihoodKind::CensoredExceedance,
                &[cop.theta(), mar.alpha()],
                strategy.as_ref(),
                &fit_opts,
            )
            .unwrap();
            estimates[ci][0].push(report.theta_hat[0]);
            estimates[ci][1].push(report.theta_hat[1]);
        }
    }
    let truths = [[1.7, 0.9], [0.4, 1.5], [1.2, 1.7]];
    for ci in 0..3 {
        for pi in 0..2 {
            let v = &estimates[ci][pi];
            let m = mean(v);
            let se = sd(v) / (n_reps as f64).sqrt();
            let t = truths[ci][pi];
            println!(
                "criterion 09: cluster {} param {} mean {m:.3} (se {se:.3}) truth {t}",
                ci + 1,
                pi + 1
            );
            assert!(
                (m - t).abs() <= 3.0 * se.max(0.02),
                "cluster {} param {}: mean {m} vs truth {t} (se {se})",
                ci + 1,
                pi + 1
            );
        }
    }
    println!("criterion 09 PASS: step-1 clustered estimates recover all six parameters");
}

#[test]
fn criterion_10_smle_regimes() {
    // Logistic m = 3, n = 200: |fit_smle(S = 1e5) - fit| <= 0.05, and the
    // seed-to-seed SD of fit_smle is strictly larger at S = 100 than at
    // S = 1e5.
    let alpha = 1.7;
    let template = logistic_template(3, alpha);
    let model = template.build(&[alpha]).unwrap();
    let cfg = SimConfig::new(model, 200, 5150).unwrap().with_truncation(1_000).unwrap();
    let (data, _) = sample_max_stable(&cfg).unwrap();
    let dataset = Dataset::Maxima(data);

    let q = quad();
    let exact_opts = FitOptions {
        optimizer: OptimizerOptions { restarts: 0, max_iters: 120, ..Default::default() },
        compute_covariance: false,
        margins_estimated: false,
    };
    let mle = fit(&dataset, &template, &LikelihoodKind::Full, &[alpha], &q, &exact_opts)
        .unwrap()
        .theta_hat[0];

    let smle_opts = FitOptions {
        optimizer: OptimizerOptions {
            restarts: 0,
            max_iters: 60,
            f_tol: 1e-7,
            x_tol: 1e-5,
            ..Default::default()
        },
        compute_covariance: false,
        margins_estimated: false,
    };
    let big = fit_smle(&dataset, &template, 100_000, 990, &[alpha], &smle_opts).unwrap();
    let gap = (big.theta_hat[0] - mle).abs();
    println!("criterion 10: MLE {mle:.4}, SMLE(S=1e5) {:.4} (gap {gap:.4})", big.theta_hat[0]);
    assert!(gap <= 0.05, "SMLE(1e5) vs MLE gap {gap}");

    let mut small_s = Vec::new();
    let mut large_s = Vec::new();
    for seed in 0..20u64 {
        let a = fit_smle(&dataset, &template, 100, 1_000 + seed, &[alpha], &smle_opts).unwrap();
        small_s.push(a.theta_hat[0]);
        let b =
            fit_smle(&dataset, &template, 100_000, 2_000 + seed, &[alpha], &smle_opts).unwrap();
        large_s.push(b.theta_hat[0]);
    }
    let (sd_small, sd_large) = (sd(&small_s), sd(&large_s));
    println!("criterion 10: SD over 20 seeds: S=100 {sd_small:.4}, S=1e5 {sd_large:.5}");
    assert!(
        sd_small > sd_large,
        "variance should inflate at S = 100 ({sd_small} vs {sd_large})"
    );
    println!("criterion 10 PASS: SMLE regimes behave per the n/S limit");
}

#[test]
fn criterion_11_scores_match_fd_all_kinds() {
    // score vs central FD of the log-likelihood, rel 1e-3, 20 random
    // (theta, observation) spread over the five kinds, m = 3 Gaussian.
    let sites = SiteSet::new(vec![[0.0, 0.0], [0.7, 0.4], [1.5, 1.1]]).unwrap();
    let template = ModelTemplate::GaussianMatern { sites };
    let build = |th: &[f64]| template.build(th);
    let q = quad();
    let mut rng = ChaCha12Rng::seed_from_u64(1111);
    let clustering = Partition::new(
        vec![
            ComponentSet::from_members(&[0, 1], 3).unwrap(),
            ComponentSet::from_members(&[2], 3).unwrap(),
        ],
        3,
    )
    .unwrap();

    let mut worst = 0.0f64;
    for case in 0..20 {
        let theta_vals = [0.8 + 0.4 * rng.random::<f64>(), 0.8 + 0.4 * rng.random::<f64>()];
        let theta = ThetaVector::new(vec![
            ThetaParam { name: "c".into(), value: theta_vals[0], transform: Transform::Positive },
            ThetaParam { name: "nu".into(), value: theta_vals[1], transform: Transform::Positive },
        ])
        .unwrap();
        let models = FdModels::build(&build, &theta).unwrap();
        let z: Vec<f64> = (0..3).map(|_| 0.6 + 1.8 * rng.random::<f64>()).collect();
        let exceed = {
            let mut x = vec![1.0; 3];
            x[case % 3] = 1.2 + rng.random::<f64>();
            x[(case + 1) % 3] = 1.0 + if case % 2 == 0 { 0.0 } else { 0.8 };
            ExceedanceRecord::new(x).unwrap()
        };
        let block = maxstable::likelihood::BlockMaximaRecord::new(
            z.clone(),
            if case % 2 == 0 {
                Partition::singletons(3)
            } else {
                Partition::new(
                    vec![
                        ComponentSet::from_members(&[0, 2], 3).unwrap(),
                        ComponentSet::from_members(&[1], 3).unwrap(),
                    ],
                    3,
                )
                .unwrap()
            },
        )
        .unwrap();

        let (kind, obs): (LikelihoodKind, Observation) = match case % 5 {
            0 => (LikelihoodKind::Full, Observation::Maxima(&z)),
            1 => (
                LikelihoodKind::PartitionComposite {
                    clustering: clustering.clone(),
                    weighted: true,
                },
                Observation::Maxima(&z),
            ),
            2 => (LikelihoodKind::Pairwise, Observation::Maxima(&z)),
            3 => (LikelihoodKind::CensoredExceedance, Observation::Exceedance(&exceed)),
            _ => (LikelihoodKind::MaximaOccurrence, Observation::BlockMaxima(&block)),
        };

        let s = score(&models, &kind, obs, &q, None).unwrap();
        let eval = |th: &[f64]| -> f64 {
            let model = build(th).unwrap();
            match (&kind, obs) {
                (LikelihoodKind::Full, Observation::Maxima(zz)) => {
                    loglik_full(&model, zz, &q).unwrap()
                }
                (LikelihoodKind::PartitionComposite { clustering, weighted }, Observation::Maxima(zz)) => {
                    maxstable::likelihood::loglik_partition(&model, zz, clustering, *weighted, &q)
                        .unwrap()
                }
                (LikelihoodKind::Pairwise, Observation::Maxima(zz)) => {
                    maxstable::likelihood::loglik_pairwise(&model, zz, &q).unwrap()
                }
                (LikelihoodKind::CensoredExceedance, Observation::Exceedance(r)) => {
                    loglik_censored(&model, r, &q, None).unwrap()
                }
                (LikelihoodKind::MaximaOccurrence, Observation::BlockMaxima(r)) => {
                    loglik_maxima_occurrence(&model, r, &q).unwrap()
                }
                _ => unreachable!(),
            }
        };
        for i in 0..2 {
            let h = 1e-4 * theta_vals[i].max(1.0);
            let mut up = theta_vals.to_vec();
            up[i] += h;
            let mut dn = theta_vals.to_vec();
            dn[i] -= h;
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            let rel = (s[i] - fd).abs() / fd.abs().max(0.05);
            worst = worst.max(rel);
            assert!(
                rel < 1e-3,
                "{} case {case} param {i}: score {} vs fd {}",
                kind.name(),
                s[i],
                fd
            );
        }
    }
    println!("criterion 11 PASS: score assemblies match FD for all five kinds (worst rel {worst:.2e})");
}

#[test]
fn criterion_12_bell_number_anchors() {
    assert_eq!(bell_number(7).unwrap(), 877);
    assert_eq!(bell_number(10).unwrap(), 115975);
    assert_eq!(enumerate_partitions(7).unwrap().count(), 877);
    println!("criterion 12 PASS: Bell(7) = 877, Bell(10) = 115975");
}

#[test]
fn criterion_13_mvn_oracles() {
    // mvn_cdf vs Sheppard's bivariate orthant formula (abs 5e-4) and the
    // one-dimensional orthant-moment closed forms (abs 1e-5).
    let mut rho = -0.9f64;
    let mut worst = 0.0f64;
    while rho <= 0.91 {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let g = GaussianSpec::centered(cov).unwrap();
        let est = mvn_cdf(&[0.0, 0.0], &g, 1e-6, 99).unwrap();
        let want = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        let err = (est.value - want).abs();
        worst = worst.max(err);
        assert!(err < 5e-4, "rho {rho}: {} vs {want}", est.value);
        rho += 0.1;
    }

    let g1 = GaussianSpec::centered(DMatrix::from_element(1, 1, 1.0)).unwrap();
    for (p, want) in [
        (0u32, 0.5),
        (1, 1.0 / (2.0 * std::f64::consts::PI).sqrt()),
        (2, 0.5),
        (3, 2.0 / (2.0 * std::f64::consts::PI).sqrt()),
    ] {
        let est = mvn_orthant_moment(&g1, 0, p, 1e-7, 3).unwrap();
        assert!((est.value - want).abs() < 1e-5, "p={p}: {} vs {want}", est.value);
    }
    println!("criterion 13 PASS: Sheppard orthant (worst abs {worst:.2e}) and 1-D moments");
}

#[test]
fn criterion_14_hill_consistency() {
    // |alpha_hat - 1| < 0.15 on exact unit-Pareto samples (n = 1e4, k = 500)
    // in at least 18 of 20 seeds.
    let mut pass = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(60_000 + seed);
        let rows: Vec<Vec<f64>> =
            (0..10_000).map(|_| vec![1.0 / (1.0 - rng.random::<f64>())]).collect();
        let data = RawMatrix::from_rows(rows).unwrap();
        let (_, fitres) = maxstable::pipeline::hill_transform(&data, 500).unwrap();
        if (fitres.alpha_hat[0] - 1.0).abs() < 0.15 {
            pass += 1;
        }
    }
    println!("criterion 14: Hill within 0.15 of 1 in {pass}/20 seeds");
    assert!(pass >= 18, "only {pass}/20 seeds within tolerance");
    println!("criterion 14 PASS: Hill estimator consistency");
}

// A straight sanity run of the full-likelihood MLE used by criterion 10's
// regime check (the simulate-then-fit loop the studies depend on).
#[test]
fn criterion_10_support_logistic_mle_consistency() {
    let alpha = 1.7;
    let template = logistic_template(3, alpha);
    let model = template.build(&[alpha]).unwrap();
    let cfg = SimConfig::new(model, 500, 700).unwrap().with_truncation(1_000).unwrap();
    let (data, _) = sample_max_stable(&cfg).unwrap();
    let dataset = Dataset::Maxima(data);
    let q = quad();
    let opts = FitOptions {
        optimizer: OptimizerOptions { restarts: 0, max_iters: 120, ..Default::default() },
        compute_covariance: true,
        margins_estimated: false,
    };
    let report =
        fit(&dataset, &template, &LikelihoodKind::Full, &[alpha], &q, &opts).unwrap();
    // asymptotic SE at n = 500 is about 0.04
    assert!(
        (report.theta_hat[0] - alpha).abs() < 0.12,
        "alpha_hat {}",
        report.theta_hat[0]
    );
    let var = report.covariance.as_ref().unwrap()[0][0];
    assert!(var > 0.0 && var < 0.01, "reported variance {var}");
    println!(
        "criterion 10 support: logistic MLE {:.3} (se {:.3})",
        report.theta_hat[0],
        var.sqrt()
    );
    let _ = eval_dataset(
        &template.build(&report.theta_hat).unwrap(),
        &LikelihoodKind::Full,
        &dataset,
        &q,
    )
    .unwrap();
}
