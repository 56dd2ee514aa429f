//! Archimedean generators, their high-order derivatives, and the mean-one
//! margins of the clustered spectral family.
//!
//! Everything is evaluated in log space: the integrands stack generator
//! derivatives, inverse-generator Jacobians and margin densities whose
//! magnitudes routinely leave the double range individually while the product
//! stays moderate.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{
    gamma_p, gamma_q, ln_gamma, ln_norm_pdf, log_sum_exp, neg_ln_norm_cdf, norm_cdf,
    norm_quantile,
};

/// Highest generator-derivative order served before erroring.
pub const PSI_DERIV_ORDER_CAP: usize = 12;

/// Archimedean copula family with a completely monotone generator.
///
/// `Gumbel { theta: 1.0 }` is the independence copula (`psi(t) = e^-t`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CopulaFamily {
    Gumbel { theta: f64 },
    Clayton { theta: f64 },
}

impl CopulaFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CopulaFamily::Gumbel { theta } => {
                if !(theta.is_finite() && theta >= 1.0) {
                    return Err(Error::invalid(format!("Gumbel copula requires theta >= 1, got {theta}")));
                }
            }
            CopulaFamily::Clayton { theta } => {
                if !(theta.is_finite() && theta > 0.0) {
                    return Err(Error::invalid(format!("Clayton copula requires theta > 0, got {theta}")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            CopulaFamily::Gumbel { .. } => "gumbel",
            CopulaFamily::Clayton { .. } => "clayton",
        }
    }

    pub fn theta(&self) -> f64 {
        match *self {
            CopulaFamily::Gumbel { theta } => theta,
            CopulaFamily::Clayton { theta } => theta,
        }
    }

    pub fn with_theta(&self, theta: f64) -> CopulaFamily {
        match self {
            CopulaFamily::Gumbel { .. } => CopulaFamily::Gumbel { theta },
            CopulaFamily::Clayton { .. } => CopulaFamily::Clayton { theta },
        }
    }

    /// ln psi(t).
    pub fn ln_psi(&self, t: f64) -> f64 {
        match *self {
            CopulaFamily::Gumbel { theta } => -t.powf(1.0 / theta),
            CopulaFamily::Clayton { theta } => -t.ln_1p() / theta,
        }
    }

    /// Inverse generator from the *negative log* of the argument:
    /// `psi^{-1}(u)` where `u = exp(-neg_log_u)`. Working from -ln u keeps
    /// the upper tail (u -> 1) exact.
    pub fn psi_inv_from_neg_log(&self, neg_log_u: f64) -> f64 {
        match *self {
            CopulaFamily::Gumbel { theta } => neg_log_u.powf(theta),
            CopulaFamily::Clayton { theta } => (theta * neg_log_u).exp_m1(),
        }
    }

    /// ln |psi'(s)|; psi' is negative everywhere.
    pub fn ln_abs_psi1(&self, s: f64) -> f64 {
        match *self {
            CopulaFamily::Gumbel { theta } => {
                let beta = 1.0 / theta;
                beta.ln() + (beta - 1.0) * s.ln() - s.powf(beta)
            }
            CopulaFamily::Clayton { theta } => {
                -theta.ln() - (1.0 / theta + 1.0) * s.ln_1p()
            }
        }
    }

    /// Coefficient row for the Gumbel derivative expansion
    /// `psi^(k)(t) = e^{-t^beta} sum_j a_{k,j} t^{j beta - k}`; all `a_{k,j}`
    /// carry the sign `(-1)^k`, so the row is returned as `ln |a_{k,j}|`.
    fn gumbel_coeff_row(beta: f64, k: usize) -> Vec<f64> {
        let mut row = vec![-beta]; // a_{1,1}
        for kk in 1..k {
            let kf = kk as f64;
            let mut next = vec![0.0; kk + 1];
            for (j_idx, &a) in row.iter().enumerate() {
                let j = (j_idx + 1) as f64;
                next[j_idx] += (j * beta - kf) * a;
                next[j_idx + 1] += -beta * a;
            }
            row = next;
        }
        row.iter().map(|a| a.abs().ln()).collect()
    }

    /// `(ln |psi^(k)(t)|, sign)`; the sign is `(-1)^k` (complete
    /// monotonicity).
    pub fn ln_abs_psi_deriv(&self, k: usize, t: f64) -> Result<(f64, f64)> {
        if k > PSI_DERIV_ORDER_CAP {
            return Err(Error::invalid(format!(
                "generator derivative order {k} beyond supported {PSI_DERIV_ORDER_CAP}"
            )));
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        if k == 0 {
            return Ok((self.ln_psi(t), 1.0));
        }
        match *self {
            CopulaFamily::Gumbel { theta } => {
                if t <= 0.0 {
                    return Err(Error::invalid("Gumbel generator derivatives need t > 0"));
                }
                let beta = 1.0 / theta;
                let ln_coeffs = Self::gumbel_coeff_row(beta, k);
                let ln_t = t.ln();
                let terms: Vec<f64> = ln_coeffs
                    .iter()
                    .enumerate()
                    .map(|(j_idx, &lc)| lc + ((j_idx + 1) as f64 * beta - k as f64) * ln_t)
                    .collect();
                Ok((-t.powf(beta) + log_sum_exp(&terms), sign))
            }
            CopulaFamily::Clayton { theta } => {
                let a = 1.0 / theta;
                let ln_fact: f64 = (0..k).map(|i| (a + i as f64).ln()).sum();
                Ok((ln_fact - (a + k as f64) * t.ln_1p(), sign))
            }
        }
    }

    /// Signed k-th derivative of the generator.
    pub fn psi_derivative(&self, k: usize, t: f64) -> Result<f64> {
        let (ln_abs, sign) = self.ln_abs_psi_deriv(k, t)?;
        Ok(sign * ln_abs.exp())
    }

    /// `ln |psi^(k)(t)|` for every `k = 0..=kmax` in one pass (the signs are
    /// `(-1)^k`). The clustered kernel tables call this once per node.
    pub fn ln_abs_psi_deriv_ladder(&self, kmax: usize, t: f64) -> Result<Vec<f64>> {
        if kmax > PSI_DERIV_ORDER_CAP {
            return Err(Error::invalid(format!(
                "generator derivative order {kmax} beyond supported {PSI_DERIV_ORDER_CAP}"
            )));
        }
        let mut out = Vec::with_capacity(kmax + 1);
        out.push(self.ln_psi(t));
        if kmax == 0 {
            return Ok(out);
        }
        match *self {
            CopulaFamily::Gumbel { theta } => {
                if t <= 0.0 {
                    return Err(Error::invalid("Gumbel generator derivatives need t > 0"));
                }
                let beta = 1.0 / theta;
                let ln_t = t.ln();
                let head = -t.powf(beta);
                // signed coefficient rows, grown incrementally
                let mut row = vec![-beta];
                for k in 1..=kmax {
                    if k > 1 {
                        let kf = (k - 1) as f64;
                        let mut next = vec![0.0; k];
                        for (j_idx, &a) in row.iter().enumerate() {
                            let j = (j_idx + 1) as f64;
                            next[j_idx] += (j * beta - kf) * a;
                            next[j_idx + 1] += -beta * a;
                        }
                        row = next;
                    }
                    let terms: Vec<f64> = row
                        .iter()
                        .enumerate()
                        .map(|(j_idx, &a)| {
                            a.abs().ln() + ((j_idx + 1) as f64 * beta - k as f64) * ln_t
                        })
                        .collect();
                    out.push(head + log_sum_exp(&terms));
                }
            }
            CopulaFamily::Clayton { theta } => {
                let a = 1.0 / theta;
                let l1p = t.ln_1p();
                let mut ln_fact = 0.0;
                for k in 1..=kmax {
                    ln_fact += (a + (k - 1) as f64).ln();
                    out.push(ln_fact - (a + k as f64) * l1p);
                }
            }
        }
        Ok(out)
    }

    /// Draw a frailty variable whose Laplace transform is the generator:
    /// positive stable for Gumbel (Kanter's representation), gamma for
    /// Clayton. Gumbel with theta = 1 degenerates to the constant 1.
    pub fn sample_frailty<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CopulaFamily::Gumbel { theta } => {
                if theta <= 1.0 {
                    return 1.0;
                }
                let alpha = 1.0 / theta;
                let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
                let e: f64 = -(1.0f64 - rng.random::<f64>()).ln();
                let pu = std::f64::consts::PI * u;
                let a = ((1.0 - alpha) * pu).sin()
                    * ((alpha * pu).sin()).powf(alpha / (1.0 - alpha))
                    / (pu.sin()).powf(1.0 / (1.0 - alpha));
                (a / e).powf((1.0 - alpha) / alpha)
            }
            CopulaFamily::Clayton { theta } => {
                let g = rand_distr::Gamma::new(1.0 / theta, 1.0).expect("valid gamma");
                rand_distr::Distribution::sample(&g, rng)
            }
        }
    }
}

/// Mean-one margin of a clustered spectral component.
///
/// Scales are pinned by the unit-mean requirement: log-normal location
/// `-alpha^2/2`, Weibull scale `1/Gamma(1+1/alpha)`, Frechet scale
/// `1/Gamma(1-1/alpha)` (which forces `alpha > 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MarginFamily {
    LogNormal { alpha: f64 },
    Weibull { alpha: f64 },
    Frechet { alpha: f64 },
}

impl MarginFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginFamily::LogNormal { alpha } | MarginFamily::Weibull { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::invalid(format!("margin shape must be positive, got {alpha}")));
                }
            }
            MarginFamily::Frechet { alpha } => {
                if !(alpha.is_finite() && alpha > 1.0) {
                    return Err(Error::invalid(format!(
                        "Frechet margin needs shape > 1 for a finite mean, got {alpha}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            MarginFamily::LogNormal { .. } => "lognormal",
            MarginFamily::Weibull { .. } => "weibull",
            MarginFamily::Frechet { .. } => "frechet",
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            MarginFamily::LogNormal { alpha }
            | MarginFamily::Weibull { alpha }
            | MarginFamily::Frechet { alpha } => alpha,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> MarginFamily {
        match self {
            MarginFamily::LogNormal { .. } => MarginFamily::LogNormal { alpha },
            MarginFamily::Weibull { .. } => MarginFamily::Weibull { alpha },
            MarginFamily::Frechet { .. } => MarginFamily::Frechet { alpha },
        }
    }

    fn weibull_scale(alpha: f64) -> f64 {
        (-ln_gamma(1.0 + 1.0 / alpha)).exp()
    }

    fn frechet_scale(alpha: f64) -> f64 {
        (-ln_gamma(1.0 - 1.0 / alpha)).exp()
    }

    /// ln of the density at x > 0.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            MarginFamily::LogNormal { alpha } => {
                let t = (x.ln() + alpha * alpha / 2.0) / alpha;
                ln_norm_pdf(t) - alpha.ln() - x.ln()
            }
            MarginFamily::Weibull { alpha } => {
                let lam = Self::weibull_scale(alpha);
                let lx = x.ln() - lam.ln();
                alpha.ln() - lam.ln() + (alpha - 1.0) * lx - (alpha * lx).exp()
            }
            MarginFamily::Frechet { alpha } => {
                let s = Self::frechet_scale(alpha);
                let lx = x.ln() - s.ln();
                alpha.ln() - s.ln() - (alpha + 1.0) * lx - (-alpha * lx).exp()
            }
        }
    }

    /// `-ln F(x)`, exact in the far upper tail.
    pub fn neg_ln_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::INFINITY;
        }
        match *self {
            MarginFamily::LogNormal { alpha } => {
                let t = (x.ln() + alpha * alpha / 2.0) / alpha;
                neg_ln_norm_cdf(t)
            }
            MarginFamily::Weibull { alpha } => {
                let lam = Self::weibull_scale(alpha);
                let y = (alpha * (x.ln() - lam.ln())).exp();
                // -ln(1 - e^-y) through whichever side keeps relative accuracy
                if y > std::f64::consts::LN_2 {
                    -(-(-y).exp()).ln_1p()
                } else {
                    -(-(-y).exp_m1()).ln()
                }
            }
            MarginFamily::Frechet { alpha } => {
                let s = Self::frechet_scale(alpha);
                (-alpha * (x.ln() - s.ln())).exp()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (-self.neg_ln_cdf(x)).exp()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&p));
        match *self {
            MarginFamily::LogNormal { alpha } => {
                (-alpha * alpha / 2.0 + alpha * norm_quantile(p)).exp()
            }
            MarginFamily::Weibull { alpha } => {
                Self::weibull_scale(alpha) * (-(1.0 - p).ln()).powf(1.0 / alpha)
            }
            MarginFamily::Frechet { alpha } => {
                Self::frechet_scale(alpha) * (-p.ln()).powf(-1.0 / alpha)
            }
        }
    }

    /// Partial expectation `E[(U - a)^+]`, used by the max-stable truncation
    /// diagnostic.
    pub fn partial_expectation(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 1.0 - a; // E[U] = 1
        }
        match *self {
            MarginFamily::LogNormal { alpha } => {
                let d1 = (alpha * alpha / 2.0 - a.ln()) / alpha;
                let d2 = (-alpha * alpha / 2.0 - a.ln()) / alpha;
                norm_cdf(d1) - a * norm_cdf(d2)
            }
            MarginFamily::Weibull { alpha } => {
                let lam = Self::weibull_scale(alpha);
                let y = (a / lam).powf(alpha);
                gamma_q(1.0 + 1.0 / alpha, y) - a * (-y).exp()
            }
            MarginFamily::Frechet { alpha } => {
                let s = Self::frechet_scale(alpha);
                let y = (a / s).powf(-alpha);
                gamma_p(1.0 - 1.0 / alpha, y) - a * (-(-y).exp_m1())
            }
        }
    }
}
