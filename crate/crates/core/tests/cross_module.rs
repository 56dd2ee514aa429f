//! Cross-module properties: the simulators, transforms and exponent-measure
//! machinery have to agree with each other, not just with their own oracles.

use maxstable::combinatorics::ComponentSet;
use maxstable::mu::p_b_weights;
use maxstable::pipeline::{censor_sample, cluster_components, kendall_tau_matrix, ClusterFeatures};
use maxstable::simulate::{sample_mda, SimConfig};
use maxstable::spectral::{
    ArchimedeanClusterSpec, CopulaFamily, MarginFamily, SpectralModel,
};
use nalgebra::DMatrix;

/// Censoring a max-domain-of-attraction sample reproduces the model's
/// exceedance-pattern distribution `p_B(e)` within binomial error.
#[test]
fn censored_patterns_match_exceedance_weights() {
    let corr = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let model = SpectralModel::gaussian_from_correlation(corr).unwrap();

    let n = 400_000;
    let k = n / 100;
    let cfg = SimConfig::new(model.clone(), n, 314).unwrap();
    let data = sample_mda(&cfg).unwrap();
    let recs = censor_sample(&data, k).unwrap();
    let n_exc = recs.len() as f64;

    let weights = p_b_weights(&model, &[1.0, 1.0], 7).unwrap();
    for (b, p) in &weights {
        let count = recs.iter().filter(|r| r.exceed_set() == b).count() as f64;
        let freq = count / n_exc;
        let se = (p * (1.0 - p) / n_exc).sqrt();
        // 3 binomial SE plus a small allowance for the finite-threshold bias
        assert!(
            (freq - p).abs() <= 3.0 * se + 0.01,
            "pattern {b:?}: empirical {freq:.4} vs p_B {p:.4} (se {se:.4})"
        );
    }
}

/// The dependence diagnostics recover a planted cluster structure: Kendall
/// tau of the normalized spectral proxies, then PAM on 1 - tau.
#[test]
fn planted_clusters_recovered_via_kendall_pam() {
    let m = 9;
    let defs: [(std::ops::Range<usize>, CopulaFamily, MarginFamily); 3] = [
        (0..3, CopulaFamily::Gumbel { theta: 1.7 }, MarginFamily::LogNormal { alpha: 0.9 }),
        (3..6, CopulaFamily::Clayton { theta: 2.0 }, MarginFamily::Weibull { alpha: 1.5 }),
        (6..9, CopulaFamily::Gumbel { theta: 1.6 }, MarginFamily::Frechet { alpha: 1.7 }),
    ];
    let model = SpectralModel::clustered(
        defs.iter()
            .map(|(r, cop, mar)| {
                let members: Vec<usize> = r.clone().collect();
                ArchimedeanClusterSpec::new(
                    ComponentSet::from_members(&members, m).unwrap(),
                    *cop,
                    *mar,
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap();

    let cfg = SimConfig::new(model, 4_000, 99).unwrap().with_noise(10.0).unwrap();
    let data = sample_mda(&cfg).unwrap();
    // keep rows where the Pareto factor dominates the noise
    let tau = kendall_tau_matrix(&data, 20.0).unwrap();

    // within-cluster tau should exceed cross-cluster tau on average
    let mut within = Vec::new();
    let mut across = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let same = defs.iter().any(|(r, _, _)| r.contains(&i) && r.contains(&j));
            if same {
                within.push(tau[i][j]);
            } else {
                across.push(tau[i][j]);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(
        mean(&within) > mean(&across) + 0.1,
        "within-cluster tau {:.3} vs cross {:.3}",
        mean(&within),
        mean(&across)
    );

    let partition = cluster_components(ClusterFeatures::Similarity(&tau), 3, 0).unwrap();
    let blocks: Vec<Vec<usize>> =
        partition.blocks().iter().map(|b| b.members().collect()).collect();
    assert_eq!(
        blocks,
        vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]],
        "planted clusters not recovered: {blocks:?}"
    );
}
