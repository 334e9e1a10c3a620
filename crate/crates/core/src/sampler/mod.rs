//! Metropolis-within-Gibbs sampler over the full model state.
//!
//! One iteration is a fixed sweep: for each country `mu_c`, `sigma2_c`,
//! `phi_c`; then `lambda`, `tau`, `(a, b)`. During burn-in the Metropolis
//! scales can adapt towards a 0.35 acceptance rate in batches of
//! [`ADAPT_BATCH`] iterations; they are frozen afterwards.

mod diagnostics;
mod io;
pub mod updates;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{diagnostics, effective_sample_size, split_rhat, ParamDiagnostic};
pub use io::{read_posterior_cache, read_posterior_csv, write_posterior_cache, write_posterior_csv};

use crate::data::RatePanel;
use crate::error::{Error, Result};
use crate::model::{
    logposterior, parameter_names, CountryParams, HyperParams, ModelState, A_MAX, A_MIN, B_SLOPE, LAMBDA_BOUND,
    TAU_MAX,
};
use crate::rng::{substreams, SimRng};
use updates::{update_ab_with_stats, update_lambda, update_mu, update_phi, update_sigma2, update_tau, Sigma2Stats};

pub const TARGET_ACCEPTANCE: f64 = 0.35;
pub const ADAPT_BATCH: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Initial random-walk sd of `logit(phi_c)`.
    pub phi_scale: f64,
    /// Initial random-walk sd of `ln tau`.
    pub tau_scale: f64,
    /// Initial random-walk sds of `a` and `b`.
    pub a_scale: f64,
    pub b_scale: f64,
    pub adapt_burnin: bool,
}

impl SamplerConfig {
    /// 3 chains, 20,000 iterations, 10,000 burn-in, thin 10.
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            n_chains: 3,
            n_iter: 20_000,
            n_burnin: 10_000,
            thin: 10,
            seed,
            phi_scale: 1.0,
            tau_scale: 0.1,
            a_scale: 0.2,
            b_scale: 0.5,
            adapt_burnin: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.n_burnin >= self.n_iter {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.n_burnin, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.draws_per_chain() == 0 {
            return Err(Error::Config("configuration retains no draws".into()));
        }
        for (name, s) in [
            ("phi", self.phi_scale),
            ("tau", self.tau_scale),
            ("a", self.a_scale),
            ("b", self.b_scale),
        ] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("{name} proposal scale must be positive")));
            }
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter.saturating_sub(self.n_burnin)) / self.thin
    }
}

/// A retained draw with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    /// Zero-based iteration index within the chain.
    pub iter: usize,
    pub state: ModelState,
}

/// Post-burn-in acceptance rates of the Metropolis moves for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    /// Averaged over countries.
    pub phi: f64,
    pub tau: f64,
    pub ab: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub country_codes: Vec<String>,
    pub n_chains: usize,
    /// Ordered by chain, then iteration.
    pub draws: Vec<Draw>,
    pub acceptance: Vec<AcceptanceRates>,
}

impl PosteriorSample {
    pub fn n_countries(&self) -> usize {
        self.country_codes.len()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(&self.country_codes)
    }

    /// Per-chain traces of scalar parameter `index` (see [`ModelState::to_vec`]).
    pub fn traces(&self, index: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains];
        for d in &self.draws {
            out[d.chain].push(d.state.to_vec()[index]);
        }
        out
    }

    /// All per-chain traces, indexed `[param][chain][draw]`.
    pub fn all_traces(&self) -> Vec<Vec<Vec<f64>>> {
        let n_params = 3 * self.n_countries() + 4;
        let mut out = vec![vec![Vec::new(); self.n_chains]; n_params];
        for d in &self.draws {
            for (p, v) in d.state.to_vec().into_iter().enumerate() {
                out[p][d.chain].push(v);
            }
        }
        out
    }
}

struct Scales {
    phi: Vec<f64>,
    tau: f64,
    ab: (f64, f64),
}

#[derive(Default, Clone)]
struct Counter {
    accepted: usize,
    total: usize,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.total += 1;
        self.accepted += usize::from(accepted);
    }

    fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.accepted as f64 / self.total as f64
        }
    }
}

fn adapt(scale: &mut f64, counter: &mut Counter, batch: usize) {
    let delta = (1.0 / (batch as f64).sqrt()).min(0.1);
    if counter.rate() > TARGET_ACCEPTANCE {
        *scale *= delta.exp();
    } else {
        *scale /= delta.exp();
    }
    *counter = Counter::default();
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0).max(1.0)
}

/// Dispersed, in-support starting state derived from the data.
pub fn initial_state<R: Rng + ?Sized>(series: &[Vec<f64>], rng: &mut R) -> ModelState {
    let countries: Vec<CountryParams> = series
        .iter()
        .map(|s| {
            let v = sample_var(s).max(1e-2);
            let sd_mean = (v / s.len() as f64).sqrt();
            CountryParams {
                mu: mean(s) + sd_mean * rng.random_range(-1.0..1.0),
                phi: rng.random_range(0.2..0.8),
                sigma2: v * rng.random_range(0.5..1.5),
            }
        })
        .collect();
    let mus: Vec<f64> = countries.iter().map(|p| p.mu).collect();
    let lambda = mean(&mus).clamp(-0.9 * LAMBDA_BOUND, 0.9 * LAMBDA_BOUND);
    let tau = sample_var(&mus).sqrt().clamp(0.1, 0.5 * TAU_MAX);
    let a = rng.random_range(1.5f64..3.0).clamp(A_MIN + 0.1, A_MAX - 0.1);
    let mut s2: Vec<f64> = countries.iter().map(|p| p.sigma2).collect();
    s2.sort_by(f64::total_cmp);
    let median = s2[s2.len() / 2];
    let b = ((a - 1.0) * median).clamp(1e-3, 0.9 * B_SLOPE * (a - 1.0));
    ModelState {
        countries,
        hyper: HyperParams { a, b, lambda, tau },
    }
}

struct ChainOutput {
    draws: Vec<Draw>,
    acceptance: AcceptanceRates,
}

fn run_chain(chain: usize, series: &[Vec<f64>], panel: &RatePanel, config: &SamplerConfig, mut rng: SimRng) -> Result<ChainOutput> {
    let n_countries = series.len();
    let mut state = initial_state(series, &mut rng);
    let mut scales = Scales {
        phi: vec![config.phi_scale; n_countries],
        tau: config.tau_scale,
        ab: (config.a_scale, config.b_scale),
    };
    let mut batch_phi = vec![Counter::default(); n_countries];
    let mut batch_tau = Counter::default();
    let mut batch_ab = Counter::default();
    let mut kept_phi = Counter::default();
    let mut kept_tau = Counter::default();
    let mut kept_ab = Counter::default();
    let mut mus = vec![0.0; n_countries];
    let mut sigma2s = vec![0.0; n_countries];
    let mut draws = Vec::with_capacity(config.draws_per_chain());
    let mut batch = 0usize;

    for iter in 0..config.n_iter {
        let burning = iter < config.n_burnin;
        let h = state.hyper;
        for (c, s) in series.iter().enumerate() {
            let p = &mut state.countries[c];
            p.mu = update_mu(s, p.phi, p.sigma2, h.lambda, h.tau, &mut rng);
            p.sigma2 = update_sigma2(s, p.mu, p.phi, h.a, h.b, &mut rng);
            let (phi, acc) = update_phi(s, p.mu, p.sigma2, p.phi, scales.phi[c], &mut rng);
            p.phi = phi;
            if burning {
                batch_phi[c].record(acc);
            } else {
                kept_phi.record(acc);
            }
            mus[c] = p.mu;
            sigma2s[c] = p.sigma2;
        }
        state.hyper.lambda = update_lambda(&mus, state.hyper.tau, &mut rng);
        let (tau, acc_tau) = update_tau(&mus, state.hyper.lambda, state.hyper.tau, scales.tau, &mut rng);
        state.hyper.tau = tau;
        let stats = Sigma2Stats::new(&sigma2s);
        let ((a, b), acc_ab) = update_ab_with_stats(&stats, (state.hyper.a, state.hyper.b), scales.ab, &mut rng);
        state.hyper.a = a;
        state.hyper.b = b;

        let lp = logposterior(&state, panel);
        if !lp.is_finite() {
            return Err(Error::NonFinite {
                chain,
                iter,
                state: format!("{state:?}"),
            });
        }

        if burning {
            batch_tau.record(acc_tau);
            batch_ab.record(acc_ab);
            if config.adapt_burnin && (iter + 1) % ADAPT_BATCH == 0 {
                batch += 1;
                for (sc, counter) in scales.phi.iter_mut().zip(batch_phi.iter_mut()) {
                    adapt(sc, counter, batch);
                }
                adapt(&mut scales.tau, &mut batch_tau, batch);
                let mut ab_mult = 1.0;
                adapt(&mut ab_mult, &mut batch_ab, batch);
                scales.ab = (scales.ab.0 * ab_mult, scales.ab.1 * ab_mult);
            }
        } else {
            kept_tau.record(acc_tau);
            kept_ab.record(acc_ab);
            if (iter - config.n_burnin + 1).is_multiple_of(config.thin) {
                draws.push(Draw {
                    chain,
                    iter,
                    state: state.clone(),
                });
            }
        }
    }

    Ok(ChainOutput {
        draws,
        acceptance: AcceptanceRates {
            phi: kept_phi.rate(),
            tau: kept_tau.rate(),
            ab: kept_ab.rate(),
        },
    })
}

/// Runs `config.n_chains` independent chains (concurrently, on the current
/// rayon pool). The output is a pure function of `(panel, config)`.
pub fn run_chains(panel: &RatePanel, config: &SamplerConfig) -> Result<PosteriorSample> {
    config.validate()?;
    panel.validate_for_fit()?;
    let series: Vec<Vec<f64>> = (0..panel.n_countries()).map(|c| panel.observed(c)).collect();
    let rngs = substreams(config.seed, config.n_chains);
    let outputs: Vec<Result<ChainOutput>> = rngs
        .into_par_iter()
        .enumerate()
        .map(|(chain, rng)| run_chain(chain, &series, panel, config, rng))
        .collect();
    let mut draws = Vec::with_capacity(config.n_chains * config.draws_per_chain());
    let mut acceptance = Vec::with_capacity(config.n_chains);
    for out in outputs {
        let out = out?;
        draws.extend(out.draws);
        acceptance.push(out.acceptance);
    }
    Ok(PosteriorSample {
        country_codes: panel.country_codes().to_vec(),
        n_chains: config.n_chains,
        draws,
        acceptance,
    })
}
