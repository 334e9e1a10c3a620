//! Out-of-sample validation and descriptive trend statistics.
//!
//! MAE and coverage pool all held-out country-period cells. `prop(t)` uses
//! net counts as a stand-in for gross flows and halves the absolute sum so
//! that a migrant is not counted at both ends.

use std::collections::BTreeMap;
use std::path::Path;

use crate::baselines::{fit_panel, persistence_project, project_panel_rates, Exponents};
use crate::data::{fmt_f64, write_err, PopulationPanel, RatePanel, ScheduleSet, MIN_FIT_OBSERVATIONS};
use crate::error::{Error, Result};
use crate::projector::{equal_tailed_interval, simulate, summarize, ProjectionConfig, TrajectorySet};
use crate::sampler::{run_chains, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub training: RatePanel,
    pub validation: RatePanel,
    pub m: usize,
}

/// Holds out the `m` most recent periods.
pub fn holdout_split(panel: &RatePanel, m: usize) -> Result<HoldoutSplit> {
    let t = panel.n_periods();
    if m == 0 || m + MIN_FIT_OBSERVATIONS > t {
        return Err(Error::Validation(format!(
            "hold-out size must be in 1..={} for {t} periods, got {m}",
            t.saturating_sub(MIN_FIT_OBSERVATIONS)
        )));
    }
    Ok(HoldoutSplit {
        training: panel.slice_periods(0, t - m)?,
        validation: panel.slice_periods(t - m, t)?,
        m,
    })
}

/// Mean absolute error over paired cells.
pub fn mae(forecasts: &[f64], truth: &[f64]) -> Result<f64> {
    if forecasts.len() != truth.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "{} forecasts against {} observations",
            forecasts.len(),
            truth.len()
        )));
    }
    Ok(forecasts.iter().zip(truth).map(|(f, y)| (f - y).abs()).sum::<f64>() / truth.len() as f64)
}

/// Fraction of `truth` values inside their closed interval.
pub fn interval_coverage(intervals: &[(f64, f64)], truth: &[f64]) -> Result<f64> {
    if intervals.len() != truth.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "{} intervals against {} observations",
            intervals.len(),
            truth.len()
        )));
    }
    let hits = intervals
        .iter()
        .zip(truth)
        .filter(|((lo, hi), y)| *lo <= **y && **y <= *hi)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Observed validation cells matched to trajectory cells: `(period, country, truth)`.
fn matched_cells(ts: &TrajectorySet, truth: &RatePanel) -> Result<Vec<(usize, usize, f64)>> {
    if ts.country_codes != truth.country_codes() {
        return Err(Error::Dimension("trajectories and truth list different countries".into()));
    }
    let mut cells = Vec::new();
    for (tt, p) in truth.period_starts().iter().enumerate() {
        let t = ts
            .period_starts
            .binary_search(p)
            .map_err(|_| Error::Dimension(format!("no simulated period starting {p}")))?;
        for c in 0..truth.n_countries() {
            if let Some(y) = truth.get(c, tt) {
                cells.push((t, c, y));
            }
        }
    }
    Ok(cells)
}

/// Coverage of equal-tailed empirical predictive intervals at `level`.
pub fn coverage(ts: &TrajectorySet, truth: &RatePanel, level: f64) -> Result<f64> {
    let cells = matched_cells(ts, truth)?;
    let (intervals, ys): (Vec<(f64, f64)>, Vec<f64>) = cells
        .iter()
        .map(|&(t, c, y)| {
            let mut v = ts.cell_values(t, c);
            v.sort_by(f64::total_cmp);
            (equal_tailed_interval(&v, level), y)
        })
        .unzip();
    interval_coverage(&intervals, &ys)
}

/// MAE of the predictive medians against `truth`.
pub fn median_mae(ts: &TrajectorySet, truth: &RatePanel) -> Result<f64> {
    let summary = summarize(ts);
    let cells = matched_cells(ts, truth)?;
    let (f, y): (Vec<f64>, Vec<f64>) = cells.iter().map(|&(t, c, y)| (summary.get(c, t).median, y)).unzip();
    mae(&f, &y)
}

/// `sum_c |r_c| n_c / sum_c n_c` over countries with an observed rate.
pub fn weighted_abs_rate(rates: &[Option<f64>], populations: &[f64]) -> f64 {
    let (num, den) = rates
        .iter()
        .zip(populations)
        .filter_map(|(r, n)| r.map(|r| (r.abs() * n, *n)))
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    num / den
}

/// Proportion of the world population migrating per period (per thousand).
pub fn prop_t(panel: &RatePanel, populations: &PopulationPanel) -> Result<Vec<f64>> {
    panel
        .period_starts()
        .iter()
        .enumerate()
        .map(|(t, &p)| {
            let pops = populations.column_for(panel.country_codes(), p)?;
            Ok(0.5 * weighted_abs_rate(&panel.column(t), &pops))
        })
        .collect()
}

/// Unweighted mean of `|rate|` over `rates`.
pub fn mean_abs(rates: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = rates.into_iter().fold((0.0, 0usize), |(s, n), r| (s + r.abs(), n + 1));
    s / n as f64
}

/// Mean absolute migration rate per period.
pub fn mamr_t(panel: &RatePanel) -> Vec<f64> {
    (0..panel.n_periods())
        .map(|t| mean_abs(panel.column(t).into_iter().flatten()))
        .collect()
}

/// Indices of the `k` most populous countries at `period_start`.
pub fn largest_countries(populations: &PopulationPanel, codes: &[String], period_start: i32, k: usize) -> Result<Vec<usize>> {
    let pops = populations.column_for(codes, period_start)?;
    let mut idx: Vec<usize> = (0..codes.len()).collect();
    idx.sort_by(|&a, &b| pops[b].total_cmp(&pops[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Relative growth `(x[b] - x[a]) / x[a]`.
pub fn growth(series: &[f64], a: usize, b: usize) -> f64 {
    (series[b] - series[a]) / series[a]
}

/// Zero counts as a positive (receiving) parity.
#[inline]
fn parity(x: f64) -> bool {
    x >= 0.0
}

/// Fraction of countries, observed in both periods, whose sign differs.
pub fn parity_change_fraction(panel: &RatePanel, period_a: i32, period_b: i32) -> Result<f64> {
    let ta = panel
        .period_index(period_a)
        .ok_or_else(|| Error::Validation(format!("no period starting {period_a}")))?;
    let tb = panel
        .period_index(period_b)
        .ok_or_else(|| Error::Validation(format!("no period starting {period_b}")))?;
    let pairs: Vec<(f64, f64)> = (0..panel.n_countries())
        .filter_map(|c| Some((panel.get(c, ta)?, panel.get(c, tb)?)))
        .collect();
    Ok(changed_fraction(pairs.into_iter()))
}

fn changed_fraction(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (changed, n) = pairs.fold((0usize, 0usize), |(k, n), (a, b)| (k + usize::from(parity(a) != parity(b)), n + 1));
    if n == 0 {
        0.0
    } else {
        changed as f64 / n as f64
    }
}

/// Parity-change fraction between `baseline` rates (e.g. the last observed
/// period) and simulated period `period_start`, computed per draw and averaged.
pub fn projected_parity_change(ts: &TrajectorySet, baseline: &[f64], period_start: i32) -> Result<f64> {
    if baseline.len() != ts.n_countries() {
        return Err(Error::Dimension(format!(
            "{} baseline rates for {} countries",
            baseline.len(),
            ts.n_countries()
        )));
    }
    let t = ts
        .period_starts
        .binary_search(&period_start)
        .map_err(|_| Error::Validation(format!("no simulated period starting {period_start}")))?;
    if ts.n_draws == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..ts.n_draws)
        .map(|k| changed_fraction(baseline.iter().copied().zip(ts.period_rates(k, t).iter().copied())))
        .sum();
    Ok(total / ts.n_draws as f64)
}

/// Mean over each group of `median projected rate at period - baseline rate`.
/// `groups` maps a country code to its group label; unlisted countries are ignored.
pub fn group_mean_change(
    ts: &TrajectorySet,
    baseline: &[f64],
    groups: &BTreeMap<String, String>,
    period_start: i32,
) -> Result<BTreeMap<String, f64>> {
    let t = ts
        .period_starts
        .binary_search(&period_start)
        .map_err(|_| Error::Validation(format!("no simulated period starting {period_start}")))?;
    let summary = summarize(ts);
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (c, code) in ts.country_codes.iter().enumerate() {
        if let Some(g) = groups.get(code) {
            let e = acc.entry(g.clone()).or_default();
            e.0 += summary.get(c, t).median - baseline[c];
            e.1 += 1;
        }
    }
    Ok(acc.into_iter().map(|(g, (s, n))| (g, s / n as f64)).collect())
}

/// Values indexed `[period][draw]`.
pub type PeriodDraws = Vec<Vec<f64>>;

/// Per-draw `prop` and `mamr` of simulated periods.
pub fn trajectory_trends(ts: &TrajectorySet, populations: &PopulationPanel) -> Result<(PeriodDraws, PeriodDraws)> {
    let mut props = Vec::with_capacity(ts.n_periods());
    let mut mamrs = Vec::with_capacity(ts.n_periods());
    for (t, &p) in ts.period_starts.iter().enumerate() {
        let pops = populations.column_for(&ts.country_codes, p)?;
        let mut pr = Vec::with_capacity(ts.n_draws);
        let mut ma = Vec::with_capacity(ts.n_draws);
        for k in 0..ts.n_draws {
            let rates = ts.period_rates(k, t);
            let opt: Vec<Option<f64>> = rates.iter().copied().map(Some).collect();
            pr.push(0.5 * weighted_abs_rate(&opt, &pops));
            ma.push(mean_abs(rates.iter().copied()));
        }
        props.push(pr);
        mamrs.push(ma);
    }
    Ok((props, mamrs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Model {
    Bayes,
    Gravity,
    Persistence,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::Bayes => "bayes",
            Model::Gravity => "gravity",
            Model::Persistence => "persistence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(Model::Bayes),
            "gravity" => Ok(Model::Gravity),
            "persistence" => Ok(Model::Persistence),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    /// Length of the validation window in years.
    pub window_years: i32,
    pub model: Model,
    pub mae: f64,
    pub coverage80: Option<f64>,
    pub coverage95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub sampler: SamplerConfig,
    pub projection_seed: u64,
    pub correction: bool,
    pub exponents: Exponents,
}

/// Runs the hold-out protocol for one `m` and the requested models.
pub fn evaluate_holdout(
    panel: &RatePanel,
    populations: &PopulationPanel,
    schedules: &ScheduleSet,
    m: usize,
    models: &[Model],
    settings: &EvalSettings,
) -> Result<Vec<EvalRow>> {
    let split = holdout_split(panel, m)?;
    let window_years = m as i32 * panel.period_step();
    let truth = &split.validation;
    let mut truth_cells = Vec::new();
    let mut cell_index = Vec::new();
    for c in 0..truth.n_countries() {
        for t in 0..truth.n_periods() {
            if let Some(y) = truth.get(c, t) {
                truth_cells.push(y);
                cell_index.push((c, t));
            }
        }
    }
    let mut rows = Vec::new();
    for &model in models {
        let row = match model {
            Model::Persistence => {
                let proj = persistence_project(&split.training.last_rates(), m);
                let f: Vec<f64> = cell_index.iter().map(|&(c, t)| proj[c][t]).collect();
                EvalRow { window_years, model, mae: mae(&f, &truth_cells)?, coverage80: None, coverage95: None }
            }
            Model::Gravity => {
                let fits = fit_panel(&split.training, populations, settings.exponents, None)?;
                let proj = project_panel_rates(&fits, populations, truth.period_starts())?;
                let f: Vec<f64> = cell_index.iter().map(|&(c, t)| proj[c][t]).collect();
                EvalRow { window_years, model, mae: mae(&f, &truth_cells)?, coverage80: None, coverage95: None }
            }
            Model::Bayes => {
                let posterior = run_chains(&split.training, &settings.sampler)?;
                let mut cfg = ProjectionConfig::new(panel.end_year(), settings.projection_seed);
                cfg.correction = settings.correction;
                let ts = simulate(&posterior, &split.training, populations, schedules, &cfg)?;
                EvalRow {
                    window_years,
                    model,
                    mae: median_mae(&ts, truth)?,
                    coverage80: Some(coverage(&ts, truth, 0.8)?),
                    coverage95: Some(coverage(&ts, truth, 0.95)?),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_eval_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["validation_years", "model", "mae", "coverage80", "coverage95"])
        .map_err(|e| write_err(path, e))?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.window_years.to_string(),
            r.model.label().to_string(),
            fmt_f64(r.mae),
            opt(r.coverage80),
            opt(r.coverage95),
        ])
        .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
