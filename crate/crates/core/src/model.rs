//! Parameter types and log-densities of the three-level hierarchical AR(1) model.
//!
//! Level 1: `r[t] - mu = phi * (r[t-1] - mu) + eps`, `eps ~ N(0, sigma2)`.
//! Level 2: `phi ~ U(0,1)`, `mu ~ N(lambda, tau^2)`, `sigma2 ~ IG(a, b)`.
//! Level 3: `a ~ U(1,10)`, `b | a ~ U(0, 100(a-1))`, `lambda ~ U(-100,100)`,
//! `tau ~ U(0,100)`.
//!
//! The inverse gamma is in shape-rate form: density
//! `b^a / Gamma(a) * x^(-a-1) * exp(-b/x)`. The likelihood conditions on the
//! first observation of each series.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::RatePanel;
use crate::error::{Error, Result};

/// `0.5 * ln(2 pi)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub const A_MIN: f64 = 1.0;
pub const A_MAX: f64 = 10.0;
pub const B_SLOPE: f64 = 100.0;
pub const LAMBDA_BOUND: f64 = 100.0;
pub const TAU_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountryParams {
    /// Equilibrium rate (per thousand).
    pub mu: f64,
    /// Autoregressive coefficient in (0, 1).
    pub phi: f64,
    /// Innovation variance.
    pub sigma2: f64,
}

impl CountryParams {
    pub fn in_support(&self) -> bool {
        self.mu.is_finite() && self.phi > 0.0 && self.phi < 1.0 && self.sigma2 > 0.0 && self.sigma2.is_finite()
    }

    /// Conditional mean of the next value given the current one.
    #[inline]
    pub fn predict(&self, current: f64) -> f64 {
        self.mu + self.phi * (current - self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Inverse-gamma shape.
    pub a: f64,
    /// Inverse-gamma rate.
    pub b: f64,
    /// Mean of the country equilibria.
    pub lambda: f64,
    /// Standard deviation of the country equilibria.
    pub tau: f64,
}

impl HyperParams {
    pub fn in_support(&self) -> bool {
        ab_in_support(self.a, self.b)
            && self.lambda > -LAMBDA_BOUND
            && self.lambda < LAMBDA_BOUND
            && self.tau > 0.0
            && self.tau < TAU_MAX
    }
}

#[inline]
pub fn ab_in_support(a: f64, b: f64) -> bool {
    a > A_MIN && a < A_MAX && b > 0.0 && b < B_SLOPE * (a - 1.0)
}

/// Full parameter vector: one [`CountryParams`] per country plus the hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub countries: Vec<CountryParams>,
    pub hyper: HyperParams,
}

impl ModelState {
    pub fn in_support(&self) -> bool {
        self.hyper.in_support() && self.countries.iter().all(CountryParams::in_support)
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    /// Flattened scalar parameters in the canonical order
    /// `mu[..], phi[..], sigma2[..], lambda, tau, a, b`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.countries.len() + 4);
        v.extend(self.countries.iter().map(|p| p.mu));
        v.extend(self.countries.iter().map(|p| p.phi));
        v.extend(self.countries.iter().map(|p| p.sigma2));
        v.extend([self.hyper.lambda, self.hyper.tau, self.hyper.a, self.hyper.b]);
        v
    }

    pub fn from_slice(values: &[f64], n_countries: usize) -> Result<Self> {
        if values.len() != 3 * n_countries + 4 {
            return Err(Error::Dimension(format!(
                "{} values for {n_countries} countries",
                values.len()
            )));
        }
        let c = n_countries;
        let countries = (0..c)
            .map(|i| CountryParams {
                mu: values[i],
                phi: values[c + i],
                sigma2: values[2 * c + i],
            })
            .collect();
        let h = &values[3 * c..];
        Ok(ModelState {
            countries,
            hyper: HyperParams {
                lambda: h[0],
                tau: h[1],
                a: h[2],
                b: h[3],
            },
        })
    }
}

/// Names matching [`ModelState::to_vec`], e.g. `mu[USA]`, `lambda`.
pub fn parameter_names(country_codes: &[String]) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * country_codes.len() + 4);
    for prefix in ["mu", "phi", "sigma2"] {
        names.extend(country_codes.iter().map(|c| format!("{prefix}[{c}]")));
    }
    names.extend(["lambda", "tau", "a", "b"].map(String::from));
    names
}

#[inline]
pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -HALF_LN_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

#[inline]
pub(crate) fn inv_gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Transition log-likelihood without the length check.
pub(crate) fn transition_loglik(params: &CountryParams, series: &[f64]) -> f64 {
    series
        .windows(2)
        .map(|w| normal_logpdf(w[1], params.predict(w[0]), params.sigma2))
        .sum()
}

/// Sum over transitions of `log N(r[t]; mu(1-phi) + phi r[t-1], sigma2)`,
/// conditioning on `series[0]`.
pub fn loglik_country(params: &CountryParams, series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Validation(format!(
            "AR(1) likelihood needs at least 2 observations, got {}",
            series.len()
        )));
    }
    Ok(transition_loglik(params, series))
}

/// Log prior density of a full state, `-inf` outside the support.
pub fn logprior(state: &ModelState) -> f64 {
    if !state.in_support() {
        return f64::NEG_INFINITY;
    }
    let h = &state.hyper;
    let tau2 = h.tau * h.tau;
    let country: f64 = state
        .countries
        .iter()
        .map(|p| normal_logpdf(p.mu, h.lambda, tau2) + inv_gamma_logpdf(p.sigma2, h.a, h.b))
        .sum();
    // phi ~ U(0,1) contributes 0; the conditional density of b given a is
    // 1 / (100 (a - 1)), which is not constant in a.
    let hyper = -(A_MAX - A_MIN).ln()
        - (B_SLOPE * (h.a - 1.0)).ln()
        - (2.0 * LAMBDA_BOUND).ln()
        - TAU_MAX.ln();
    country + hyper
}

/// `logprior + sum_c loglik_country`. Countries with fewer than two
/// observations contribute no likelihood term.
pub fn logposterior(state: &ModelState, panel: &RatePanel) -> f64 {
    if state.n_countries() != panel.n_countries() {
        return f64::NAN;
    }
    let prior = logprior(state);
    if prior == f64::NEG_INFINITY {
        return prior;
    }
    let lik: f64 = state
        .countries
        .iter()
        .enumerate()
        .map(|(c, p)| transition_loglik(p, &panel.observed(c)))
        .sum();
    prior + lik
}
