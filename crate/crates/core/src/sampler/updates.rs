//! Single-parameter moves of the Metropolis-within-Gibbs sweep.
//!
//! `mu`, `sigma2` and `lambda` are drawn exactly from their full
//! conditionals. `phi`, `tau` and `(a, b)` use random-walk Metropolis: `phi`
//! on the logit scale, `tau` on the log scale (both with the Jacobian of the
//! transform), and `(a, b)` on the natural scale.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

use crate::model::{ab_in_support, transition_loglik, CountryParams, B_SLOPE, LAMBDA_BOUND, TAU_MAX};

/// Accepts a Metropolis proposal. Non-negative log ratios (including the
/// self-proposal) are accepted without consuming randomness.
#[inline]
pub fn metropolis_accept<R: Rng + ?Sized>(log_current: f64, log_proposed: f64, rng: &mut R) -> bool {
    let log_ratio = log_proposed - log_current;
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

#[inline]
fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Mean and variance of the normal full conditional of `mu_c`.
pub fn mu_conditional(series: &[f64], phi: f64, sigma2: f64, lambda: f64, tau: f64) -> (f64, f64) {
    let n = (series.len() - 1) as f64;
    let one_minus = 1.0 - phi;
    let sum: f64 = series.windows(2).map(|w| w[1] - phi * w[0]).sum();
    let tau2 = tau * tau;
    let precision = 1.0 / tau2 + n * one_minus * one_minus / sigma2;
    let mean = (lambda / tau2 + one_minus / sigma2 * sum) / precision;
    (mean, 1.0 / precision)
}

pub fn update_mu<R: Rng + ?Sized>(
    series: &[f64],
    phi: f64,
    sigma2: f64,
    lambda: f64,
    tau: f64,
    rng: &mut R,
) -> f64 {
    let (mean, var) = mu_conditional(series, phi, sigma2, lambda, tau);
    mean + var.sqrt() * std_normal(rng)
}

/// Shape and rate of the inverse-gamma full conditional of `sigma2_c`.
pub fn sigma2_conditional(series: &[f64], mu: f64, phi: f64, a: f64, b: f64) -> (f64, f64) {
    let ssr: f64 = series
        .windows(2)
        .map(|w| {
            let e = w[1] - mu - phi * (w[0] - mu);
            e * e
        })
        .sum();
    (a + 0.5 * (series.len() - 1) as f64, b + 0.5 * ssr)
}

/// Draws from `IG(shape, rate)` as the reciprocal of a gamma variate.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    if !(rate.is_finite() && rate > 0.0 && shape.is_finite() && shape > 0.0) {
        // Propagates to a non-finite log-density, which aborts the chain.
        return f64::NAN;
    }
    let g: f64 = Gamma::new(shape, 1.0 / rate)
        .expect("inverse-gamma parameters are positive")
        .sample(rng);
    1.0 / g.max(f64::MIN_POSITIVE)
}

pub fn update_sigma2<R: Rng + ?Sized>(
    series: &[f64],
    mu: f64,
    phi: f64,
    a: f64,
    b: f64,
    rng: &mut R,
) -> f64 {
    let (shape, rate) = sigma2_conditional(series, mu, phi, a, b);
    sample_inv_gamma(shape, rate, rng)
}

/// Log target of `phi_c` on the logit scale: AR(1) likelihood plus the
/// Jacobian `ln phi + ln(1 - phi)`.
pub fn phi_log_target(series: &[f64], mu: f64, sigma2: f64, phi: f64) -> f64 {
    if !(phi > 0.0 && phi < 1.0) {
        return f64::NEG_INFINITY;
    }
    let p = CountryParams { mu, phi, sigma2 };
    transition_loglik(&p, series) + phi.ln() + (1.0 - phi).ln()
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Metropolis-Hastings step for `phi_c` given the proposed value.
pub fn phi_step<R: Rng + ?Sized>(
    series: &[f64],
    mu: f64,
    sigma2: f64,
    phi: f64,
    proposal: f64,
    rng: &mut R,
) -> (f64, bool) {
    let current = phi_log_target(series, mu, sigma2, phi);
    let proposed = phi_log_target(series, mu, sigma2, proposal);
    if metropolis_accept(current, proposed, rng) {
        (proposal, true)
    } else {
        (phi, false)
    }
}

pub fn update_phi<R: Rng + ?Sized>(
    series: &[f64],
    mu: f64,
    sigma2: f64,
    phi: f64,
    scale: f64,
    rng: &mut R,
) -> (f64, bool) {
    let proposal = logistic(logit(phi) + scale * std_normal(rng));
    phi_step(series, mu, sigma2, phi, proposal, rng)
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[inline]
fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Exact draw from `N(mean, sd^2)` truncated to `(lo, hi)` by inverting the
/// CDF on the truncated interval.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
        return f64::NAN;
    }
    // Work in the lower tail, where the CDF keeps relative precision.
    let (sign, m) = if mean > 0.0 { (-1.0, -mean) } else { (1.0, mean) };
    let (lo, hi) = if sign < 0.0 { (-hi, -lo) } else { (lo, hi) };
    let alpha = (lo - m) / sd;
    let beta = (hi - m) / sd;
    if alpha > 5.0 {
        // Whole interval deep in the upper tail: exponential-proposal
        // rejection sampler on [alpha, beta).
        loop {
            let e: f64 = -rng.random::<f64>().ln() / alpha;
            let z = alpha + e;
            let u: f64 = rng.random();
            if u.ln() <= -0.5 * e * e && z < beta {
                let x = m + sd * z;
                if x > lo && x < hi {
                    return sign * x;
                }
            }
        }
    }
    let (pa, pb) = (std_normal_cdf(alpha), std_normal_cdf(beta));
    loop {
        let u: f64 = rng.random();
        let z = std_normal_quantile(pa + u * (pb - pa));
        let x = m + sd * z;
        if x > lo && x < hi {
            return sign * x;
        }
    }
}

/// Gibbs draw of `lambda` from `N(mean(mu), tau^2 / C)` on `(-100, 100)`.
pub fn update_lambda<R: Rng + ?Sized>(mus: &[f64], tau: f64, rng: &mut R) -> f64 {
    let c = mus.len() as f64;
    let mean = mus.iter().sum::<f64>() / c;
    sample_truncated_normal(mean, tau / c.sqrt(), -LAMBDA_BOUND, LAMBDA_BOUND, rng)
}

/// Log target of `tau` on the log scale: `tau^-C exp(-S / 2 tau^2)` times
/// the Jacobian `tau`, restricted to `(0, 100)`.
pub fn tau_log_target(mus: &[f64], lambda: f64, tau: f64) -> f64 {
    if !(tau > 0.0 && tau < TAU_MAX) {
        return f64::NEG_INFINITY;
    }
    let ss: f64 = mus.iter().map(|m| (m - lambda) * (m - lambda)).sum();
    -(mus.len() as f64 - 1.0) * tau.ln() - ss / (2.0 * tau * tau)
}

pub fn tau_step<R: Rng + ?Sized>(mus: &[f64], lambda: f64, tau: f64, proposal: f64, rng: &mut R) -> (f64, bool) {
    let current = tau_log_target(mus, lambda, tau);
    let proposed = tau_log_target(mus, lambda, proposal);
    if metropolis_accept(current, proposed, rng) {
        (proposal, true)
    } else {
        (tau, false)
    }
}

pub fn update_tau<R: Rng + ?Sized>(mus: &[f64], lambda: f64, tau: f64, scale: f64, rng: &mut R) -> (f64, bool) {
    let proposal = tau * (scale * std_normal(rng)).exp();
    tau_step(mus, lambda, tau, proposal, rng)
}

/// Sufficient statistics of the `sigma2_c` for the `(a, b)` move.
#[derive(Debug, Clone, Copy)]
pub struct Sigma2Stats {
    pub count: f64,
    pub sum_ln: f64,
    pub sum_inv: f64,
}

impl Sigma2Stats {
    pub fn new(sigma2s: &[f64]) -> Self {
        Sigma2Stats {
            count: sigma2s.len() as f64,
            sum_ln: sigma2s.iter().map(|s| s.ln()).sum(),
            sum_inv: sigma2s.iter().map(|s| 1.0 / s).sum(),
        }
    }
}

/// Log target of `(a, b)`: the inverse-gamma likelihood of every `sigma2_c`
/// plus the hyperprior `a ~ U(1,10)`, `b | a ~ U(0, 100(a-1))`.
pub fn ab_log_target(stats: &Sigma2Stats, a: f64, b: f64) -> f64 {
    if !ab_in_support(a, b) {
        return f64::NEG_INFINITY;
    }
    stats.count * (a * b.ln() - ln_gamma(a)) - (a + 1.0) * stats.sum_ln - b * stats.sum_inv
        - (B_SLOPE * (a - 1.0)).ln()
}

pub fn ab_step<R: Rng + ?Sized>(
    stats: &Sigma2Stats,
    current: (f64, f64),
    proposal: (f64, f64),
    rng: &mut R,
) -> ((f64, f64), bool) {
    // Out-of-support proposals are rejected before any randomness is used.
    let proposed = ab_log_target(stats, proposal.0, proposal.1);
    if proposed == f64::NEG_INFINITY {
        return (current, false);
    }
    let cur = ab_log_target(stats, current.0, current.1);
    if metropolis_accept(cur, proposed, rng) {
        (proposal, true)
    } else {
        (current, false)
    }
}

pub fn update_ab<R: Rng + ?Sized>(
    sigma2s: &[f64],
    current: (f64, f64),
    scales: (f64, f64),
    rng: &mut R,
) -> ((f64, f64), bool) {
    let stats = Sigma2Stats::new(sigma2s);
    update_ab_with_stats(&stats, current, scales, rng)
}

pub(crate) fn update_ab_with_stats<R: Rng + ?Sized>(
    stats: &Sigma2Stats,
    current: (f64, f64),
    scales: (f64, f64),
    rng: &mut R,
) -> ((f64, f64), bool) {
    let proposal = (
        current.0 + scales.0 * std_normal(rng),
        current.1 + scales.1 * std_normal(rng),
    );
    ab_step(stats, current, proposal, rng)
}
