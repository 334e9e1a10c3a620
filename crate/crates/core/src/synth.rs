//! Synthetic panels drawn from the model itself, used for calibration checks,
//! examples and the `synth` CLI command.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::data::{CellKey, MigrationSchedule, PopulationPanel, RatePanel, ScheduleSet};
use crate::error::{Error, Result};
use crate::model::{parameter_names, CountryParams, HyperParams, ModelState};
use crate::rng::seeded;
use crate::sampler::updates::sample_inv_gamma;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_countries: usize,
    /// Observed periods in the rate panel.
    pub n_periods: usize,
    pub start_year: i32,
    /// Populations are generated for every period ending on or before this year.
    pub population_end_year: i32,
    pub hyper: HyperParams,
    pub age_groups: Vec<String>,
    pub sexes: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_countries: 50,
            n_periods: 12,
            start_year: 1950,
            population_end_year: 2100,
            hyper: HyperParams {
                a: 3.0,
                b: 10.0,
                lambda: 0.0,
                tau: 3.0,
            },
            age_groups: vec!["0-19".into(), "20-64".into(), "65+".into()],
            sexes: vec!["f".into(), "m".into()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub rates: RatePanel,
    pub populations: PopulationPanel,
    pub schedules: ScheduleSet,
    pub truth: ModelState,
}

/// Three-letter codes `AAA`, `AAB`, ... in sorted order.
pub fn synthetic_codes(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let l = |k: usize| char::from(b'A' + (k % 26) as u8);
            [l(i / 676), l(i / 26), l(i)].iter().collect()
        })
        .collect()
}

/// Draws country parameters from the level-2 priors given `hyper`.
pub fn draw_truth<R: Rng + ?Sized>(n_countries: usize, hyper: HyperParams, rng: &mut R) -> ModelState {
    let countries = (0..n_countries)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            let mut phi: f64 = rng.random();
            while phi <= 0.0 {
                phi = rng.random();
            }
            CountryParams {
                mu: hyper.lambda + hyper.tau * z,
                phi,
                sigma2: sample_inv_gamma(hyper.a, hyper.b, rng),
            }
        })
        .collect();
    ModelState { countries, hyper }
}

/// Simulates an AR(1) path of length `n`, starting from the stationary law.
pub fn simulate_series<R: Rng + ?Sized>(p: &CountryParams, n: usize, rng: &mut R) -> Vec<f64> {
    let sd = p.sigma2.sqrt();
    let z: f64 = StandardNormal.sample(rng);
    let mut x = p.mu + z * sd / (1.0 - p.phi * p.phi).sqrt();
    let mut out = Vec::with_capacity(n);
    out.push(x);
    for _ in 1..n {
        let e: f64 = StandardNormal.sample(rng);
        x = p.predict(x) + sd * e;
        out.push(x);
    }
    out
}

pub fn simulate_panel(cfg: &SynthConfig, seed: u64) -> Result<SynthData> {
    if cfg.n_countries == 0 || cfg.n_periods < 2 {
        return Err(Error::Config("synthetic panel needs countries and at least 2 periods".into()));
    }
    if cfg.age_groups.is_empty() || cfg.sexes.is_empty() {
        return Err(Error::Config("synthetic schedules need age groups and sexes".into()));
    }
    let mut rng = seeded(seed);
    let codes = synthetic_codes(cfg.n_countries);
    let truth = draw_truth(cfg.n_countries, cfg.hyper, &mut rng);
    let periods: Vec<i32> = (0..cfg.n_periods as i32).map(|i| cfg.start_year + 5 * i).collect();
    let rows: Vec<Vec<f64>> = truth
        .countries
        .iter()
        .map(|p| simulate_series(p, cfg.n_periods, &mut rng))
        .collect();
    let rates = RatePanel::from_rows(codes.clone(), periods, &rows)?;

    let n_pop_periods = ((cfg.population_end_year - cfg.start_year) / 5).max(cfg.n_periods as i32) as usize;
    let pop_periods: Vec<i32> = (0..n_pop_periods as i32).map(|i| cfg.start_year + 5 * i).collect();
    let mut pops = Vec::with_capacity(cfg.n_countries * n_pop_periods);
    for _ in 0..cfg.n_countries {
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut n = (9.0 + 1.5 * z).exp();
        let growth = rng.random_range(-0.02..0.12);
        for _ in 0..n_pop_periods {
            pops.push(n);
            n *= 1.0 + growth;
        }
    }
    let populations = PopulationPanel::new(codes.clone(), pop_periods, pops)?;

    let keys: Vec<CellKey> = cfg
        .age_groups
        .iter()
        .flat_map(|a| cfg.sexes.iter().map(move |s| CellKey::new(a.clone(), s.clone())))
        .collect();
    let gamma = Gamma::new(2.0, 1.0).expect("valid gamma");
    let schedules = codes
        .iter()
        .map(|code| {
            let w: Vec<f64> = keys.iter().map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = w.iter().sum();
            MigrationSchedule {
                country_code: code.clone(),
                cells: keys.iter().cloned().zip(w.iter().map(|x| x / total)).collect::<BTreeMap<_, _>>(),
            }
        })
        .collect();
    let schedules = ScheduleSet::new(schedules)?;

    Ok(SynthData {
        rates,
        populations,
        schedules,
        truth,
    })
}

/// Writes true parameter values as `param_name,value`.
pub fn save_truth(truth: &ModelState, codes: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::data::write_err(path, e))?;
    w.write_record(["param_name", "value"])
        .map_err(|e| crate::data::write_err(path, e))?;
    for (name, v) in parameter_names(codes).iter().zip(truth.to_vec()) {
        w.write_record([name.as_str(), &crate::data::fmt_f64(v)])
            .map_err(|e| crate::data::write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
