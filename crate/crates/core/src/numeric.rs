//! Scalar special functions shared by the numeric kernels.
//!
//! Everything here is deterministic double-precision math: standard normal
//! pdf/cdf/quantile (including a log-cdf that stays finite far in the lower
//! tail), the modified Bessel function of the third kind `K_nu`, and the
//! regularized incomplete gamma functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub const SQRT_2PI: f64 = 2.5066282746310002;
pub const LN_2PI: f64 = 1.8378770664093453;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

#[inline]
pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * LN_2PI
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// log of the standard normal CDF, accurate down to x ~ -1e8.
///
/// For moderately negative x the erfc path is exact; beyond the underflow
/// point the asymptotic expansion `phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - ...)`
/// takes over.
pub fn ln_norm_cdf(x: f64) -> f64 {
    // erfc stays normal down to x ~ -37, where the truncated Mills series
    // is already machine-precise; switching earlier would leave a seam.
    if x > -36.0 {
        let p = norm_cdf(x);
        if p > 0.0 {
            return p.ln();
        }
    }
    // Asymptotic series for the Mills ratio tail.
    let x2 = x * x;
    let mut corr = 0.0;
    let mut term = 1.0;
    for k in 1..=6 {
        term *= -((2 * k - 1) as f64) / x2;
        corr += term;
    }
    ln_norm_pdf(x) - (-x).ln() + corr.ln_1p()
}

/// `-ln Phi(x)` with full *relative* accuracy on both tails: near x -> +inf
/// the value is the tiny survival probability itself, which a plain
/// `-ln(norm_cdf(x))` destroys (the CDF rounds to 1).
pub fn neg_ln_norm_cdf(x: f64) -> f64 {
    if x >= 0.7 {
        let q = 0.5 * libm::erfc(x * FRAC_1_SQRT_2);
        -(-q).ln_1p()
    } else {
        -ln_norm_cdf(x)
    }
}

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
pub fn norm_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A_QNORM, r) / poly(&B_QNORM, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C_QNORM, r) / poly(&D_QNORM, r)
    } else {
        let r = r - 5.0;
        poly(&E_QNORM, r) / poly(&F_QNORM, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[inline]
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

const A_QNORM: [f64; 8] = [
    3.387132872796366608,
    133.14166789178437745,
    1971.5909503065514427,
    13731.693765509461125,
    45921.953931549871457,
    67265.770927008700853,
    33430.575583588128105,
    2509.0809287301226727,
];
const B_QNORM: [f64; 8] = [
    1.0,
    42.313330701600911252,
    687.1870074920579083,
    5394.1960214247511077,
    21213.794301586595867,
    39307.89580009271061,
    28729.085735721942674,
    5226.495278852545703,
];
const C_QNORM: [f64; 8] = [
    1.42343711074968357734,
    4.6303378461565452959,
    5.7694972214606914055,
    3.64784832476320460504,
    1.27045825245236838258,
    0.24178072517745061177,
    0.0227238449892691845833,
    7.7454501427834140764e-4,
];
const D_QNORM: [f64; 8] = [
    1.0,
    2.05319162663775882187,
    1.6763848301838038494,
    0.68976733498510000455,
    0.14810397642748007459,
    0.0151986665636164571966,
    5.475938084995344946e-4,
    1.05075007164441684324e-9,
];
const E_QNORM: [f64; 8] = [
    6.6579046435011037772,
    5.4637849111641143699,
    1.7848265399172913358,
    0.29656057182850489123,
    0.026532189526576123093,
    0.0012426609473880784386,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F_QNORM: [f64; 8] = [
    1.0,
    0.59983220655588793769,
    0.13692988092273580531,
    0.0148753612908506148525,
    7.868691311456132591e-4,
    1.8463183175100546818e-5,
    1.4215117583164458887e-7,
    2.04426310338993978564e-15,
];

/// Modified Bessel function of the third kind `K_nu(x)` for real order
/// `nu >= 0` and `x > 0`.
///
/// Temme's series below x = 2, Steed's continued fraction above, then upward
/// recurrence in the order. Relative accuracy is ~1e-13 over the range used
/// by the Matern correlation.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x > 0.0, "bessel_k requires nu >= 0, x > 0");
    const EPS: f64 = 1e-16;
    const MAXIT: usize = 10_000;

    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64; // |mu| <= 1/2
    let (mut k_mu, mut k_mu1);

    if x <= 2.0 {
        // Temme series.
        let x1 = 0.5 * x;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x1.ln();
        let e = mu * d;
        let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = chebyshev_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let e = e.exp();
        let mut p = 0.5 * e / gampl;
        let mut q = 0.5 / (e * gammi);
        let mut c = 1.0;
        let d2 = x1 * x1;
        let mut sum1 = p;
        let mut i = 1.0;
        loop {
            ff = (i * ff + p + q) / (i * i - mu * mu);
            c *= d2 / i;
            p /= i - mu;
            q /= i + mu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - i * ff);
            if del.abs() < sum.abs() * EPS || i as usize > MAXIT {
                break;
            }
            i += 1.0;
        }
        k_mu = sum;
        k_mu1 = sum1 * 2.0 / x;
    } else {
        // Steed's continued fraction CF2.
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut h = d;
        let mut delh = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - mu * mu;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..=MAXIT {
            a -= 2.0 * (i as f64 - 1.0);
            c = -a * c / i as f64;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        let h = a1 * h;
        k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    }

    // Upward recurrence K_{mu+1+i} from (K_mu, K_{mu+1}).
    for i in 0..nl {
        let k_next = (mu + i as f64 + 1.0) * 2.0 / x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = k_next;
    }
    k_mu
}

/// Chebyshev fits for Temme's Gamma combinations (Numerical-Recipes beschb).
fn chebyshev_gammas(x: f64) -> (f64, f64, f64, f64) {
    const C1: [f64; 7] = [
        -1.142022680371168e0,
        6.5165112670737e-3,
        3.087090173086e-4,
        -3.4706269649e-6,
        6.9437664e-9,
        3.67795e-11,
        -1.356e-13,
    ];
    const C2: [f64; 8] = [
        1.843740587300905e0,
        -7.68528408447867e-2,
        1.2719271366546e-3,
        -4.9717367042e-6,
        -3.31261198e-8,
        2.423096e-10,
        -1.702e-13,
        -1.49e-15,
    ];
    let xx = 8.0 * x * x - 1.0;
    let gam1 = chebev(-1.0, 1.0, &C1, xx);
    let gam2 = chebev(-1.0, 1.0, &C2, xx);
    let gampl = gam2 - x * gam1;
    let gammi = gam2 + x * gam1;
    (gam1, gam2, gampl, gammi)
}

fn chebev(a: f64, b: f64, c: &[f64], x: f64) -> f64 {
    let y = (2.0 * x - a - b) / (b - a);
    let y2 = 2.0 * y;
    let (mut d, mut dd) = (0.0, 0.0);
    for &cj in c.iter().skip(1).rev() {
        let sv = d;
        d = y2 * d - dd + cj;
        dd = sv;
    }
    y * d - dd + 0.5 * c[0]
}

/// ln Gamma(x) for x > 0.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Log-sum-exp over a slice; -inf inputs are ignored.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let mx = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    let s: f64 = values.iter().map(|v| (v - mx).exp()).sum();
    mx + s.ln()
}

/// Streaming log-sum-exp accumulator with a running max.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max.is_finite() {
            self.max + self.sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}
