//! Probabilistic projection of net international migration rates.
//!
//! Country rates follow an AR(1) process whose long-run means, persistence
//! and innovation variances are tied together by a common prior. The
//! posterior is sampled with Metropolis-within-Gibbs, and forecast
//! trajectories are corrected so that net migration sums to zero across
//! countries within every age/sex cell.
//!
//! ```no_run
//! use netmig::data::{load_population_panel, load_rate_panel, ScheduleSet};
//! use netmig::projector::{simulate, summarize, ProjectionConfig};
//! use netmig::sampler::{run_chains, SamplerConfig};
//!
//! let rates = load_rate_panel("rates.csv")?;
//! let pops = load_population_panel("populations.csv")?;
//! let posterior = run_chains(&rates, &SamplerConfig::with_seed(1))?;
//! let schedules = ScheduleSet::single_cell(rates.country_codes());
//! let ts = simulate(&posterior, &rates, &pops, &schedules, &ProjectionConfig::new(2100, 2))?;
//! let summary = summarize(&ts);
//! # Ok::<(), netmig::Error>(())
//! ```

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod model;
pub mod projector;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
