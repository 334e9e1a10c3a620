//! Joint posterior-predictive trajectories with zero global net migration.
//!
//! For every retained posterior draw, each future period is produced by:
//!
//! 1. one AR(1) step per country from the current (corrected) rate;
//! 2. conversion to net counts with the projected population;
//! 3. apportioning counts over age x sex cells with the country's schedule;
//! 4. per cell, removing the global overflow in proportion to population:
//!    `y*[c] = y[c] - n[c] / sum_j n[j] * sum_j y[j]`;
//! 5. summing the corrected cells back into a rate.
//!
//! The corrected rate is the state for the next step. Schedules and
//! population projections are fixed inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{fmt_f64, write_err, CellKey, PopulationPanel, RatePanel, ScheduleSet};
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::rng::{substreams, SimRng};
use crate::sampler::PosteriorSample;

/// Net counts laid out `[country][cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    pub n_countries: usize,
    pub n_cells: usize,
    pub values: Vec<f64>,
}

impl CellCounts {
    pub fn country(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_cells..(c + 1) * self.n_cells]
    }

    /// Sum over countries of cell `k`.
    pub fn cell_total(&self, k: usize) -> f64 {
        (0..self.n_countries).map(|c| self.values[c * self.n_cells + k]).sum()
    }

    /// Sum over countries of `|count|` in cell `k`.
    pub fn cell_abs_total(&self, k: usize) -> f64 {
        (0..self.n_countries)
            .map(|c| self.values[c * self.n_cells + k].abs())
            .sum()
    }

    /// Largest `|sum_c y[c,k]| / sum_c |y[c,k]|` over cells (0 for all-zero cells).
    pub fn max_relative_imbalance(&self) -> f64 {
        (0..self.n_cells)
            .map(|k| {
                let abs = self.cell_abs_total(k);
                if abs == 0.0 {
                    0.0
                } else {
                    self.cell_total(k).abs() / abs
                }
            })
            .fold(0.0, f64::max)
    }
}

/// One AR(1) step per country: `mu + phi (r - mu) + eps`, `eps ~ N(0, sigma2)`.
pub fn step_rates<R: Rng + ?Sized>(state: &ModelState, current: &[f64], rng: &mut R) -> Vec<f64> {
    let mut next = vec![0.0; current.len()];
    step_rates_into(state, current, &mut next, rng);
    next
}

fn step_rates_into<R: Rng + ?Sized>(state: &ModelState, current: &[f64], next: &mut [f64], rng: &mut R) {
    for ((p, &r), out) in state.countries.iter().zip(current).zip(next.iter_mut()) {
        let e: f64 = StandardNormal.sample(rng);
        *out = p.predict(r) + p.sigma2.sqrt() * e;
    }
}

fn disaggregate_with(counts: &[f64], fractions: &[Vec<f64>], out: &mut CellCounts) {
    out.values.clear();
    for (y, f) in counts.iter().zip(fractions) {
        out.values.extend(f.iter().map(|share| y * share));
    }
}

/// Splits each country's net count over its schedule cells.
pub fn disaggregate(counts: &[f64], codes: &[String], schedules: &ScheduleSet) -> Result<CellCounts> {
    if counts.len() != codes.len() {
        return Err(Error::Dimension(format!("{} counts for {} countries", counts.len(), codes.len())));
    }
    let fractions = schedules.fractions_for(codes)?;
    let mut out = CellCounts {
        n_countries: codes.len(),
        n_cells: schedules.n_cells(),
        values: Vec::new(),
    };
    disaggregate_with(counts, &fractions, &mut out);
    Ok(out)
}

fn correct_in_place(cells: &mut CellCounts, weights: &[f64]) {
    for k in 0..cells.n_cells {
        let overflow = cells.cell_total(k);
        for (c, w) in weights.iter().enumerate() {
            cells.values[c * cells.n_cells + k] -= w * overflow;
        }
    }
}

fn population_weights(populations: &[f64]) -> Vec<f64> {
    let total: f64 = populations.iter().sum();
    populations.iter().map(|n| n / total).collect()
}

/// Removes the global overflow of every cell in proportion to total population.
pub fn zero_sum_correct(cells: &CellCounts, populations: &[f64]) -> Result<CellCounts> {
    if populations.len() != cells.n_countries {
        return Err(Error::Dimension(format!(
            "{} populations for {} countries",
            populations.len(),
            cells.n_countries
        )));
    }
    if populations.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return Err(Error::Validation("populations must be positive".into()));
    }
    let mut out = cells.clone();
    correct_in_place(&mut out, &population_weights(populations));
    Ok(out)
}

/// Sums each country's cells and converts back to a rate per thousand.
pub fn reaggregate(cells: &CellCounts, populations: &[f64]) -> Result<Vec<f64>> {
    if populations.len() != cells.n_countries {
        return Err(Error::Dimension(format!(
            "{} populations for {} countries",
            populations.len(),
            cells.n_countries
        )));
    }
    Ok((0..cells.n_countries)
        .map(|c| cells.country(c).iter().sum::<f64>() / populations[c])
        .collect())
}

/// Which corrected age/sex counts a simulation keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CellStorage {
    #[default]
    None,
    /// Only the final simulated period.
    Last,
    /// Every simulated period.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    /// Last year covered by the final simulated period.
    pub horizon: i32,
    pub seed: u64,
    /// Apply the zero-sum correction (disable only to measure its effect).
    pub correction: bool,
    pub keep_cells: CellStorage,
}

impl ProjectionConfig {
    pub fn new(horizon: i32, seed: u64) -> Self {
        ProjectionConfig {
            horizon,
            seed,
            correction: true,
            keep_cells: CellStorage::None,
        }
    }
}

/// Simulated rates, indexed `[draw][period][country]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub country_codes: Vec<String>,
    pub period_starts: Vec<i32>,
    pub n_draws: usize,
    pub rates: Vec<f64>,
    pub cell_keys: Vec<CellKey>,
    /// Periods (indices into `period_starts`) whose cell counts were kept.
    pub cell_periods: Vec<usize>,
    /// Corrected counts `[draw][kept period][country][cell]`.
    pub cell_counts: Vec<f64>,
    /// Largest relative cell imbalance per `[draw][period]` after correction.
    pub imbalance: Vec<f64>,
}

impl TrajectorySet {
    pub fn n_countries(&self) -> usize {
        self.country_codes.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_starts.len()
    }

    pub fn rate(&self, draw: usize, period: usize, country: usize) -> f64 {
        self.rates[(draw * self.n_periods() + period) * self.n_countries() + country]
    }

    /// Rates of all countries in one draw and period.
    pub fn period_rates(&self, draw: usize, period: usize) -> &[f64] {
        let c = self.n_countries();
        let start = (draw * self.n_periods() + period) * c;
        &self.rates[start..start + c]
    }

    /// All draws of one country-period cell.
    pub fn cell_values(&self, period: usize, country: usize) -> Vec<f64> {
        (0..self.n_draws).map(|k| self.rate(k, period, country)).collect()
    }

    /// Kept corrected counts for a draw and a kept-period slot.
    pub fn kept_cells(&self, draw: usize, slot: usize) -> CellCounts {
        let n_cells = self.cell_keys.len();
        let width = self.n_countries() * n_cells;
        let start = (draw * self.cell_periods.len() + slot) * width;
        CellCounts {
            n_countries: self.n_countries(),
            n_cells,
            values: self.cell_counts[start..start + width].to_vec(),
        }
    }

    pub fn max_imbalance(&self) -> f64 {
        self.imbalance.iter().copied().fold(0.0, f64::max)
    }
}

struct DrawOutput {
    rates: Vec<f64>,
    cells: Vec<f64>,
    imbalance: Vec<f64>,
}

/// Future period starts implied by the last observed period and a horizon.
pub fn future_periods(last_start: i32, step: i32, horizon: i32) -> Result<Vec<i32>> {
    if horizon < last_start + step {
        return Err(Error::Horizon(format!(
            "horizon {horizon} precedes the end of the last observed period ({})",
            last_start + step
        )));
    }
    Ok(std::iter::successors(Some(last_start + step), |p| Some(p + step))
        .take_while(|p| p + step <= horizon)
        .collect())
}

/// Simulates one corrected trajectory per posterior draw, starting from the
/// last observed rates of `panel`.
pub fn simulate(
    posterior: &PosteriorSample,
    panel: &RatePanel,
    populations: &PopulationPanel,
    schedules: &ScheduleSet,
    config: &ProjectionConfig,
) -> Result<TrajectorySet> {
    if posterior.country_codes != panel.country_codes() {
        return Err(Error::Dimension(
            "posterior and rate panel list different countries".into(),
        ));
    }
    let codes = panel.country_codes().to_vec();
    let step = panel.period_step();
    let last_start = *panel.period_starts().last().expect("non-empty panel");
    let periods = future_periods(last_start, step, config.horizon)?;
    let pops: Vec<Vec<f64>> = periods
        .iter()
        .map(|&p| populations.column_for(&codes, p))
        .collect::<Result<_>>()?;
    let weights: Vec<Vec<f64>> = pops.iter().map(|p| population_weights(p)).collect();
    let fractions = schedules.fractions_for(&codes)?;
    let n_cells = schedules.n_cells();
    let last_rates = panel.last_rates();

    let cell_periods: Vec<usize> = match config.keep_cells {
        CellStorage::None => vec![],
        CellStorage::Last => periods.len().checked_sub(1).into_iter().collect(),
        CellStorage::All => (0..periods.len()).collect(),
    };

    let run = |(draw, mut rng): (usize, SimRng)| -> DrawOutput {
        let state = &posterior.draws[draw].state;
        let n = codes.len();
        let mut current = last_rates.clone();
        let mut next = vec![0.0; n];
        let mut counts = vec![0.0; n];
        let mut cells = CellCounts {
            n_countries: n,
            n_cells,
            values: Vec::with_capacity(n * n_cells),
        };
        let mut out = DrawOutput {
            rates: Vec::with_capacity(periods.len() * n),
            cells: Vec::with_capacity(cell_periods.len() * n * n_cells),
            imbalance: Vec::with_capacity(periods.len()),
        };
        for t in 0..periods.len() {
            step_rates_into(state, &current, &mut next, &mut rng);
            for ((y, r), pop) in counts.iter_mut().zip(&next).zip(&pops[t]) {
                *y = r * pop;
            }
            disaggregate_with(&counts, &fractions, &mut cells);
            if config.correction {
                correct_in_place(&mut cells, &weights[t]);
            }
            out.imbalance.push(cells.max_relative_imbalance());
            for c in 0..n {
                current[c] = cells.country(c).iter().sum::<f64>() / pops[t][c];
            }
            out.rates.extend_from_slice(&current);
            if cell_periods.binary_search(&t).is_ok() {
                out.cells.extend_from_slice(&cells.values);
            }
        }
        out
    };

    let outputs: Vec<DrawOutput> = substreams(config.seed, posterior.draws.len())
        .into_par_iter()
        .enumerate()
        .map(run)
        .collect();

    let mut ts = TrajectorySet {
        country_codes: codes,
        period_starts: periods,
        n_draws: outputs.len(),
        rates: Vec::new(),
        cell_keys: schedules.cell_keys().to_vec(),
        cell_periods,
        cell_counts: Vec::new(),
        imbalance: Vec::new(),
    };
    for o in outputs {
        ts.rates.extend(o.rates);
        ts.cell_counts.extend(o.cells);
        ts.imbalance.extend(o.imbalance);
    }
    Ok(ts)
}

/// Empirical quantile of sorted data with linear interpolation between
/// order statistics: position `h = (n - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval `(q/2, 1 - q/2)` for coverage `level = 1 - q`.
pub fn equal_tailed_interval(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(sorted, tail), quantile_sorted(sorted, 1.0 - tail))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

impl Quantiles {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&values, p);
        Quantiles {
            median: q(0.5),
            p10: q(0.1),
            p90: q(0.9),
            p2_5: q(0.025),
            p97_5: q(0.975),
        }
    }

    pub fn is_nested(&self) -> bool {
        self.p2_5 <= self.p10 && self.p10 <= self.median && self.median <= self.p90 && self.p90 <= self.p97_5
    }
}

/// Per country-period quantiles, indexed `[country][period]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSummary {
    pub country_codes: Vec<String>,
    pub period_starts: Vec<i32>,
    pub cells: Vec<Quantiles>,
}

impl QuantileSummary {
    pub fn get(&self, country: usize, period: usize) -> &Quantiles {
        &self.cells[country * self.period_starts.len() + period]
    }
}

pub fn summarize(ts: &TrajectorySet) -> QuantileSummary {
    let cells = (0..ts.n_countries())
        .flat_map(|c| (0..ts.n_periods()).map(move |t| (c, t)))
        .map(|(c, t)| Quantiles::from_values(ts.cell_values(t, c)))
        .collect();
    QuantileSummary {
        country_codes: ts.country_codes.clone(),
        period_starts: ts.period_starts.clone(),
        cells,
    }
}

pub fn write_trajectories_csv(ts: &TrajectorySet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["draw", "country_code", "period_start", "rate"])
        .map_err(|e| write_err(path, e))?;
    for k in 0..ts.n_draws {
        let draw = k.to_string();
        for (c, code) in ts.country_codes.iter().enumerate() {
            for (t, p) in ts.period_starts.iter().enumerate() {
                w.write_record([draw.as_str(), code, &p.to_string(), &fmt_f64(ts.rate(k, t, c))])
                    .map_err(|e| write_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a trajectory CSV back into a rate-only [`TrajectorySet`].
pub fn read_trajectories_csv(path: impl AsRef<Path>) -> Result<TrajectorySet> {
    use std::collections::{BTreeMap, BTreeSet};
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut cells: BTreeMap<(usize, String, i32), f64> = BTreeMap::new();
    let mut codes = BTreeSet::new();
    let mut periods = BTreeSet::new();
    let mut n_draws = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = || Error::Parse {
            path: path.into(),
            line,
            msg: "expected draw,country_code,period_start,rate".into(),
        };
        if rec.len() != 4 {
            return Err(bad());
        }
        let draw: usize = rec[0].parse().map_err(|_| bad())?;
        let period: i32 = rec[2].parse().map_err(|_| bad())?;
        let rate: f64 = rec[3].parse().map_err(|_| bad())?;
        n_draws = n_draws.max(draw + 1);
        codes.insert(rec[1].to_string());
        periods.insert(period);
        cells.insert((draw, rec[1].to_string(), period), rate);
    }
    let codes: Vec<String> = codes.into_iter().collect();
    let periods: Vec<i32> = periods.into_iter().collect();
    let mut rates = Vec::with_capacity(n_draws * codes.len() * periods.len());
    for k in 0..n_draws {
        for &p in &periods {
            for code in &codes {
                rates.push(*cells.get(&(k, code.clone(), p)).ok_or_else(|| {
                    Error::Validation(format!("{}: missing trajectory cell ({k}, {code}, {p})", path.display()))
                })?);
            }
        }
    }
    Ok(TrajectorySet {
        country_codes: codes,
        period_starts: periods,
        n_draws,
        rates,
        cell_keys: Vec::new(),
        cell_periods: Vec::new(),
        cell_counts: Vec::new(),
        imbalance: Vec::new(),
    })
}

pub fn write_summary_csv(summary: &QuantileSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["country_code", "period_start", "median", "p10", "p90", "p2_5", "p97_5"])
        .map_err(|e| write_err(path, e))?;
    for (c, code) in summary.country_codes.iter().enumerate() {
        for (t, p) in summary.period_starts.iter().enumerate() {
            let q = summary.get(c, t);
            w.write_record([
                code.clone(),
                p.to_string(),
                fmt_f64(q.median),
                fmt_f64(q.p10),
                fmt_f64(q.p90),
                fmt_f64(q.p2_5),
                fmt_f64(q.p97_5),
            ])
            .map_err(|e| write_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
