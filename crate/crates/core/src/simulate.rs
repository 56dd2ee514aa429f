//! Seedable generators for max-domain-of-attraction samples and approximate
//! max-stable samples.
//!
//! Rows draw from independent substreams of the root seed, so results do not
//! depend on how callers partition the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::pipeline::RawMatrix;
use crate::spectral::SpectralModel;

/// Simulation settings: the spectral model, sample count, root seed, the
/// optional additive exponential noise of the MDA design, and the Poisson
/// truncation depth of the max-stable sampler.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub model: SpectralModel,
    pub n: usize,
    pub seed: u64,
    /// Mean of the additive i.i.d. exponential noise, if any.
    pub noise_exp_mean: Option<f64>,
    /// Number of Poisson points kept by `sample_max_stable`.
    pub truncation: usize,
}

impl SimConfig {
    pub fn new(model: SpectralModel, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        Ok(SimConfig { model, n, seed, noise_exp_mean: None, truncation: 1_000 })
    }

    pub fn with_noise(mut self, mean: f64) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(Error::invalid("noise mean must be positive"));
        }
        self.noise_exp_mean = Some(mean);
        Ok(self)
    }

    pub fn with_truncation(mut self, n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::invalid("truncation must be at least 1"));
        }
        self.truncation = n_points;
        Ok(self)
    }
}

/// A max-domain-of-attraction sample: rows `Y_i = Gamma_i U_i (+ E_i)` with
/// unit-Pareto `Gamma`, i.i.d. spectral vectors `U`, and optional
/// exponential noise. (The uniform-divisor variant `Y = U/R` is the same
/// law: `1/R` is unit Pareto.)
pub fn sample_mda(cfg: &SimConfig) -> Result<RawMatrix> {
    let m = cfg.model.dim();
    let mut data = vec![0.0; cfg.n * m];
    let mut u = vec![0.0; m];
    for i in 0..cfg.n {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        let gamma = 1.0 / (1.0 - rng.random::<f64>());
        cfg.model.sample_into(&mut rng, &mut u);
        for j in 0..m {
            let mut y = gamma * u[j];
            if let Some(mean) = cfg.noise_exp_mean {
                let e: f64 = -(1.0f64 - rng.random::<f64>()).ln() * mean;
                y += e;
            }
            data[i * m + j] = y;
        }
    }
    RawMatrix::new(data, cfg.n, m)
}

/// An approximate max-stable sample via the truncated Poisson construction
/// `Z = max_{j <= N} zeta_j U_j` with `zeta_j = 1/(E_1 + ... + E_j)`.
///
/// Returns the sample and a per-sample upper bound on the probability that
/// the discarded points would have mattered (averaged over rows; decreases
/// with the truncation depth).
pub fn sample_max_stable(cfg: &SimConfig) -> Result<(RawMatrix, f64)> {
    let m = cfg.model.dim();
    let n_points = cfg.truncation;
    let mut data = vec![0.0; cfg.n * m];
    let mut u = vec![0.0; m];
    let mut trunc_bound_sum = 0.0;
    for i in 0..cfg.n {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        let mut arrival = 0.0f64;
        let row = &mut data[i * m..(i + 1) * m];
        for v in row.iter_mut() {
            *v = f64::NEG_INFINITY;
        }
        for _ in 0..n_points {
            arrival += -(1.0f64 - rng.random::<f64>()).ln();
            let zeta = 1.0 / arrival;
            cfg.model.sample_into(&mut rng, &mut u);
            for j in 0..m {
                let cand = zeta * u[j];
                if cand > row[j] {
                    row[j] = cand;
                }
            }
        }
        // Discarded points have zeta < 1/arrival; the chance any of them
        // tops component j is 1 - exp(-E[(U_j - z_j * arrival)^+] / z_j).
        let mut worst: f64 = 0.0;
        for j in 0..m {
            let z = row[j].max(1e-12);
            let pe = cfg.model.partial_expectation(j, z * arrival);
            worst = worst.max(-(-pe / z).exp_m1());
        }
        trunc_bound_sum += worst;
    }
    let mat = RawMatrix::new(data, cfg.n, m)?;
    Ok((mat, trunc_bound_sum / cfg.n as f64))
}
