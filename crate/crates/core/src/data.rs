//! Panel ingestion: net migration rates, populations and age/sex schedules.
//!
//! All panels are long-format CSV (UTF-8, `.` decimal separator, mandatory
//! header). Units follow the demographic convention used everywhere in the
//! crate:
//!
//! * rates are net migrants per thousand population per year;
//! * populations are in thousands of persons;
//! * counts are net migrants per year, in persons.
//!
//! A count is therefore `rate * population`, and a rate is
//! `count / population`. Whether the population figures are period averages
//! or period starts is up to the input file; nothing here depends on it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance on the raw sum of schedule fractions before renormalization.
pub const SCHEDULE_SUM_TOLERANCE: f64 = 1e-6;

/// Minimum number of consecutive observations a country needs to be fitted.
pub const MIN_FIT_OBSERVATIONS: usize = 3;

/// Rectangular country x period panel of net migration rates.
///
/// Cells are `None` when missing. Missing cells may only form a leading
/// block per country; the observed part is always a contiguous suffix that
/// runs through the last period.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePanel {
    country_codes: Vec<String>,
    period_starts: Vec<i32>,
    rates: Vec<Option<f64>>,
}

impl RatePanel {
    /// Builds a panel from a row-major `[country][period]` matrix.
    pub fn new(
        country_codes: Vec<String>,
        period_starts: Vec<i32>,
        rates: Vec<Option<f64>>,
    ) -> Result<Self> {
        validate_axes(&country_codes, &period_starts)?;
        if rates.len() != country_codes.len() * period_starts.len() {
            return Err(Error::Dimension(format!(
                "{} rate cells for {} countries x {} periods",
                rates.len(),
                country_codes.len(),
                period_starts.len()
            )));
        }
        let panel = RatePanel {
            country_codes,
            period_starts,
            rates,
        };
        for c in 0..panel.n_countries() {
            panel.check_row(c)?;
        }
        Ok(panel)
    }

    /// Convenience constructor for fully observed panels.
    pub fn from_rows(
        country_codes: Vec<String>,
        period_starts: Vec<i32>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let mut rates = Vec::with_capacity(rows.len() * period_starts.len());
        for row in rows {
            if row.len() != period_starts.len() {
                return Err(Error::Dimension(format!(
                    "row of length {} for {} periods",
                    row.len(),
                    period_starts.len()
                )));
            }
            rates.extend(row.iter().copied().map(Some));
        }
        RatePanel::new(country_codes, period_starts, rates)
    }

    fn check_row(&self, c: usize) -> Result<()> {
        let code = &self.country_codes[c];
        let row = self.row(c);
        let first = row.iter().position(Option::is_some).ok_or_else(|| {
            Error::Validation(format!("country {code} has no observed rates"))
        })?;
        for (t, cell) in row.iter().enumerate().skip(first) {
            match cell {
                None => {
                    return Err(Error::Validation(format!(
                        "country {code} has a gap at period {} (only leading periods may be missing)",
                        self.period_starts[t]
                    )))
                }
                Some(v) if !v.is_finite() => {
                    return Err(Error::Validation(format!(
                        "country {code} has a non-finite rate at period {}",
                        self.period_starts[t]
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn country_codes(&self) -> &[String] {
        &self.country_codes
    }

    pub fn period_starts(&self) -> &[i32] {
        &self.period_starts
    }

    pub fn n_countries(&self) -> usize {
        self.country_codes.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_starts.len()
    }

    /// Years between consecutive period starts (5 for quinquennial data).
    pub fn period_step(&self) -> i32 {
        period_step(&self.period_starts)
    }

    /// Last year covered by the final period.
    pub fn end_year(&self) -> i32 {
        self.period_starts.last().copied().unwrap_or(0) + self.period_step()
    }

    pub fn row(&self, c: usize) -> &[Option<f64>] {
        let t = self.n_periods();
        &self.rates[c * t..(c + 1) * t]
    }

    pub fn get(&self, c: usize, t: usize) -> Option<f64> {
        self.rates[c * self.n_periods() + t]
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.country_codes.binary_search_by(|c| c.as_str().cmp(code)).ok()
    }

    pub fn period_index(&self, start: i32) -> Option<usize> {
        self.period_starts.binary_search(&start).ok()
    }

    /// Index of the first observed period for country `c`.
    pub fn first_observed(&self, c: usize) -> usize {
        self.row(c).iter().position(Option::is_some).unwrap_or(0)
    }

    /// The observed (contiguous) part of a country's series.
    pub fn observed(&self, c: usize) -> Vec<f64> {
        self.row(c).iter().flatten().copied().collect()
    }

    pub fn last_observed(&self, c: usize) -> f64 {
        self.row(c)
            .last()
            .copied()
            .flatten()
            .expect("validated panel rows end with an observation")
    }

    /// Rates of the final period for every country, in panel order.
    pub fn last_rates(&self) -> Vec<f64> {
        (0..self.n_countries()).map(|c| self.last_observed(c)).collect()
    }

    /// All rates in period column `t` (missing cells are `None`).
    pub fn column(&self, t: usize) -> Vec<Option<f64>> {
        (0..self.n_countries()).map(|c| self.get(c, t)).collect()
    }

    /// Sub-panel restricted to the period index range `[start, end)`.
    pub fn slice_periods(&self, start: usize, end: usize) -> Result<RatePanel> {
        if start >= end || end > self.n_periods() {
            return Err(Error::Dimension(format!(
                "period range {start}..{end} outside 0..{}",
                self.n_periods()
            )));
        }
        let mut rates = Vec::with_capacity(self.n_countries() * (end - start));
        for c in 0..self.n_countries() {
            rates.extend_from_slice(&self.row(c)[start..end]);
        }
        RatePanel::new(
            self.country_codes.clone(),
            self.period_starts[start..end].to_vec(),
            rates,
        )
    }

    /// Checks that every country has enough consecutive observations to fit.
    pub fn validate_for_fit(&self) -> Result<()> {
        for c in 0..self.n_countries() {
            let n = self.n_periods() - self.first_observed(c);
            if n < MIN_FIT_OBSERVATIONS {
                return Err(Error::Validation(format!(
                    "country {} has {n} observed periods; at least {MIN_FIT_OBSERVATIONS} are required",
                    self.country_codes[c]
                )));
            }
        }
        Ok(())
    }
}

/// Country x period panel of populations (thousands), historical and projected.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationPanel {
    country_codes: Vec<String>,
    period_starts: Vec<i32>,
    populations: Vec<f64>,
}

impl PopulationPanel {
    pub fn new(
        country_codes: Vec<String>,
        period_starts: Vec<i32>,
        populations: Vec<f64>,
    ) -> Result<Self> {
        validate_axes(&country_codes, &period_starts)?;
        if populations.len() != country_codes.len() * period_starts.len() {
            return Err(Error::Dimension(format!(
                "{} population cells for {} countries x {} periods",
                populations.len(),
                country_codes.len(),
                period_starts.len()
            )));
        }
        if let Some(i) = populations.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            let t = period_starts.len();
            return Err(Error::Validation(format!(
                "population for {} at {} must be positive, got {}",
                country_codes[i / t],
                period_starts[i % t],
                populations[i]
            )));
        }
        Ok(PopulationPanel {
            country_codes,
            period_starts,
            populations,
        })
    }

    pub fn country_codes(&self) -> &[String] {
        &self.country_codes
    }

    pub fn period_starts(&self) -> &[i32] {
        &self.period_starts
    }

    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.populations[c * self.period_starts.len() + t]
    }

    pub fn lookup(&self, code: &str, period_start: i32) -> Option<f64> {
        let c = self
            .country_codes
            .binary_search_by(|x| x.as_str().cmp(code))
            .ok()?;
        let t = self.period_starts.binary_search(&period_start).ok()?;
        Some(self.get(c, t))
    }

    /// Populations of `codes` at `period_start`, in the order given.
    pub fn column_for(&self, codes: &[String], period_start: i32) -> Result<Vec<f64>> {
        codes
            .iter()
            .map(|code| {
                self.lookup(code, period_start).ok_or_else(|| {
                    Error::Horizon(format!(
                        "no population for {code} in period starting {period_start}"
                    ))
                })
            })
            .collect()
    }

    /// Populations aligned to a rate panel's countries and periods,
    /// row-major `[country][period]`.
    pub fn aligned_to(&self, panel: &RatePanel) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(panel.n_countries() * panel.n_periods());
        for code in panel.country_codes() {
            for &p in panel.period_starts() {
                out.push(self.lookup(code, p).ok_or_else(|| {
                    Error::Dimension(format!("no population for {code} in period starting {p}"))
                })?);
            }
        }
        Ok(out)
    }
}

/// Age group and sex labels of one schedule cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub age_group: String,
    pub sex: String,
}

impl CellKey {
    pub fn new(age_group: impl Into<String>, sex: impl Into<String>) -> Self {
        CellKey {
            age_group: age_group.into(),
            sex: sex.into(),
        }
    }
}

/// Apportioning of one country's net migrants across age x sex cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationSchedule {
    pub country_code: String,
    pub cells: BTreeMap<CellKey, f64>,
}

/// Validated schedules for a set of countries sharing one cell layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSet {
    cell_keys: Vec<CellKey>,
    schedules: BTreeMap<String, MigrationSchedule>,
}

impl ScheduleSet {
    pub fn new(schedules: Vec<MigrationSchedule>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut layout: Option<Vec<CellKey>> = None;
        for mut s in schedules {
            if s.cells.is_empty() {
                return Err(Error::Validation(format!(
                    "schedule for {} has no cells",
                    s.country_code
                )));
            }
            let mut sum = 0.0;
            for (k, &f) in &s.cells {
                if !(f.is_finite() && f >= 0.0) {
                    return Err(Error::Validation(format!(
                        "schedule for {} has invalid fraction {f} in cell ({}, {})",
                        s.country_code, k.age_group, k.sex
                    )));
                }
                sum += f;
            }
            if (sum - 1.0).abs() > SCHEDULE_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "schedule fractions for {} sum to {sum}, expected 1",
                    s.country_code
                )));
            }
            for f in s.cells.values_mut() {
                *f /= sum;
            }
            let keys: Vec<CellKey> = s.cells.keys().cloned().collect();
            match &layout {
                None => layout = Some(keys),
                Some(l) if *l != keys => {
                    return Err(Error::Validation(format!(
                        "schedule for {} uses a different age/sex layout",
                        s.country_code
                    )))
                }
                Some(_) => {}
            }
            if map.insert(s.country_code.clone(), s).is_some() {
                return Err(Error::Validation("duplicate schedule country".into()));
            }
        }
        Ok(ScheduleSet {
            cell_keys: layout.unwrap_or_default(),
            schedules: map,
        })
    }

    /// One cell ("all", "both") with fraction 1 for every country.
    pub fn single_cell(codes: &[String]) -> Self {
        let key = CellKey::new("all", "both");
        let schedules = codes
            .iter()
            .map(|c| {
                (
                    c.clone(),
                    MigrationSchedule {
                        country_code: c.clone(),
                        cells: BTreeMap::from([(key.clone(), 1.0)]),
                    },
                )
            })
            .collect();
        ScheduleSet {
            cell_keys: vec![key],
            schedules,
        }
    }

    pub fn cell_keys(&self) -> &[CellKey] {
        &self.cell_keys
    }

    pub fn n_cells(&self) -> usize {
        self.cell_keys.len()
    }

    pub fn get(&self, code: &str) -> Option<&MigrationSchedule> {
        self.schedules.get(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MigrationSchedule> {
        self.schedules.values()
    }

    /// Fraction matrix `[country][cell]` for `codes`, failing on the first
    /// country without a schedule.
    pub fn fractions_for(&self, codes: &[String]) -> Result<Vec<Vec<f64>>> {
        codes
            .iter()
            .map(|code| {
                let s = self
                    .schedules
                    .get(code)
                    .ok_or_else(|| Error::MissingSchedule(code.clone()))?;
                Ok(self.cell_keys.iter().map(|k| s.cells[k]).collect())
            })
            .collect()
    }
}

/// Net annual counts (persons) from rates (per thousand) and populations (thousands).
pub fn counts_from_rates(rates: &[f64], populations: &[f64]) -> Result<Vec<f64>> {
    check_same_len(rates.len(), populations.len())?;
    Ok(rates
        .iter()
        .zip(populations)
        .map(|(r, n)| r * n)
        .collect())
}

/// Inverse of [`counts_from_rates`].
pub fn rates_from_counts(counts: &[f64], populations: &[f64]) -> Result<Vec<f64>> {
    check_same_len(counts.len(), populations.len())?;
    Ok(counts
        .iter()
        .zip(populations)
        .map(|(y, n)| y / n)
        .collect())
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} values against {b} populations")));
    }
    Ok(())
}

fn period_step(starts: &[i32]) -> i32 {
    if starts.len() >= 2 {
        starts[1] - starts[0]
    } else {
        5
    }
}

fn validate_axes(codes: &[String], periods: &[i32]) -> Result<()> {
    if codes.is_empty() || periods.is_empty() {
        return Err(Error::Validation("panel has no countries or no periods".into()));
    }
    if codes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(
            "country codes must be unique and sorted".into(),
        ));
    }
    if periods.len() >= 2 {
        let step = periods[1] - periods[0];
        if step <= 0 || periods.windows(2).any(|w| w[1] - w[0] != step) {
            return Err(Error::Validation(format!(
                "period starts must be ascending with uniform spacing: {periods:?}"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV I/O

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(reader: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, &e))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn csv_error(path: &Path, e: &csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        line: e.position().map(|p| p.line()).unwrap_or(0),
        msg: e.to_string(),
    }
}

struct Field<'a> {
    path: &'a Path,
    line: u64,
}

impl Field<'_> {
    fn err(&self, msg: String) -> Error {
        Error::Parse {
            path: self.path.into(),
            line: self.line,
            msg,
        }
    }

    fn code(&self, s: &str) -> Result<String> {
        if s.is_empty() {
            return Err(self.err("empty country code".into()));
        }
        Ok(s.to_string())
    }

    fn year(&self, s: &str) -> Result<i32> {
        s.parse()
            .map_err(|_| self.err(format!("invalid period start `{s}`")))
    }

    fn number(&self, s: &str, what: &str) -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| self.err(format!("invalid {what} `{s}`")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite {what} `{s}`")));
        }
        Ok(v)
    }

    fn optional_number(&self, s: &str, what: &str) -> Result<Option<f64>> {
        if s.is_empty() || s.eq_ignore_ascii_case("na") {
            Ok(None)
        } else {
            self.number(s, what).map(Some)
        }
    }
}

fn read_long<T>(
    path: &Path,
    header: &[&str],
    mut parse: impl FnMut(&Field, &csv::StringRecord) -> Result<T>,
) -> Result<Vec<(u64, T)>> {
    let mut reader = open_reader(path)?;
    check_header(&mut reader, path, header)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = Field { path, line };
        if rec.len() != header.len() {
            return Err(field.err(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        out.push((line, parse(&field, &rec)?));
    }
    Ok(out)
}

/// Pivots long `(code, period, value)` records into a dense matrix, rejecting
/// duplicate keys.
#[allow(clippy::type_complexity)]
fn pivot<T: Copy>(
    path: &Path,
    records: Vec<(u64, (String, i32, T))>,
) -> Result<(Vec<String>, Vec<i32>, BTreeMap<(String, i32), T>)> {
    let mut cells = BTreeMap::new();
    let mut codes = BTreeSet::new();
    let mut periods = BTreeSet::new();
    for (line, (code, period, value)) in records {
        if cells.insert((code.clone(), period), value).is_some() {
            return Err(Error::Validation(format!(
                "{}:{line}: duplicate entry for ({code}, {period})",
                path.display()
            )));
        }
        codes.insert(code);
        periods.insert(period);
    }
    Ok((codes.into_iter().collect(), periods.into_iter().collect(), cells))
}

/// Loads a `country_code,period_start,rate` CSV. Empty or `NA` rates and
/// absent rows are treated as missing.
pub fn load_rate_panel(path: impl AsRef<Path>) -> Result<RatePanel> {
    let path = path.as_ref();
    let records = read_long(path, &["country_code", "period_start", "rate"], |f, r| {
        Ok((f.code(&r[0])?, f.year(&r[1])?, f.optional_number(&r[2], "rate")?))
    })?;
    let (codes, periods, cells) = pivot(path, records)?;
    let mut rates = Vec::with_capacity(codes.len() * periods.len());
    for code in &codes {
        for &p in &periods {
            rates.push(cells.get(&(code.clone(), p)).copied().flatten());
        }
    }
    RatePanel::new(codes, periods, rates)
}

/// Loads a `country_code,period_start,population` CSV (thousands).
pub fn load_population_panel(path: impl AsRef<Path>) -> Result<PopulationPanel> {
    let path = path.as_ref();
    let records = read_long(path, &["country_code", "period_start", "population"], |f, r| {
        Ok((f.code(&r[0])?, f.year(&r[1])?, f.number(&r[2], "population")?))
    })?;
    let (codes, periods, cells) = pivot(path, records)?;
    let mut pops = Vec::with_capacity(codes.len() * periods.len());
    for code in &codes {
        for &p in &periods {
            pops.push(*cells.get(&(code.clone(), p)).ok_or_else(|| {
                Error::Validation(format!("missing population for ({code}, {p})"))
            })?);
        }
    }
    PopulationPanel::new(codes, periods, pops)
}

/// Loads a `country_code,age_group,sex,fraction` CSV.
pub fn load_schedules(path: impl AsRef<Path>) -> Result<ScheduleSet> {
    let path = path.as_ref();
    let records = read_long(path, &["country_code", "age_group", "sex", "fraction"], |f, r| {
        let frac = f.number(&r[3], "fraction")?;
        if frac < 0.0 {
            return Err(Error::Validation(format!(
                "{}:{}: negative schedule fraction {frac}",
                path.display(),
                f.line
            )));
        }
        Ok((f.code(&r[0])?, CellKey::new(&r[1], &r[2]), frac))
    })?;
    let mut by_country: BTreeMap<String, BTreeMap<CellKey, f64>> = BTreeMap::new();
    for (line, (code, key, frac)) in records {
        let cells = by_country.entry(code.clone()).or_default();
        if cells.insert(key, frac).is_some() {
            return Err(Error::Validation(format!(
                "{}:{line}: duplicate schedule cell for {code}",
                path.display()
            )));
        }
    }
    ScheduleSet::new(
        by_country
            .into_iter()
            .map(|(country_code, cells)| MigrationSchedule {
                country_code,
                cells,
            })
            .collect(),
    )
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

/// Writes a float in shortest round-trip form.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn save_rate_panel(panel: &RatePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["country_code", "period_start", "rate"])
        .map_err(|e| write_err(path, e))?;
    for (c, code) in panel.country_codes().iter().enumerate() {
        for (t, p) in panel.period_starts().iter().enumerate() {
            let v = panel.get(c, t).map(fmt_f64).unwrap_or_else(|| "NA".into());
            w.write_record([code.as_str(), &p.to_string(), &v])
                .map_err(|e| write_err(path, e))?;
        }
    }
    finish(path, w)
}

pub fn save_population_panel(panel: &PopulationPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["country_code", "period_start", "population"])
        .map_err(|e| write_err(path, e))?;
    for (c, code) in panel.country_codes().iter().enumerate() {
        for (t, p) in panel.period_starts().iter().enumerate() {
            w.write_record([code.as_str(), &p.to_string(), &fmt_f64(panel.get(c, t))])
                .map_err(|e| write_err(path, e))?;
        }
    }
    finish(path, w)
}

pub fn save_schedules(set: &ScheduleSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_record(["country_code", "age_group", "sex", "fraction"])
        .map_err(|e| write_err(path, e))?;
    for s in set.iter() {
        for (k, f) in &s.cells {
            w.write_record([&s.country_code, &k.age_group, &k.sex, &fmt_f64(*f)])
                .map_err(|e| write_err(path, e))?;
        }
    }
    finish(path, w)
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_small_panel() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "country_code,period_start,rate\nB,1950,-1.0\nA,1955,2.0\nA,1950,1.0\nB,1955,-2.0\n",
        );
        let panel = load_rate_panel(&p).unwrap();
        assert_eq!(panel.country_codes(), ["A", "B"]);
        assert_eq!(panel.period_starts(), [1950, 1955]);
        assert_eq!(panel.observed(0), vec![1.0, 2.0]);
        assert_eq!(panel.observed(1), vec![-1.0, -2.0]);
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "country_code,period_start,rate\nA,1950,1.0\nA,1950,2.0\n",
        );
        let err = load_rate_panel(&p).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("duplicate")), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "country_code,period_start,rate\nA,1950,1.0\nA,1955,abc\n",
        );
        match load_rate_panel(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_header_and_spacing_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "h.csv", "code,period,rate\nA,1950,1\n");
        assert!(matches!(load_rate_panel(&p), Err(Error::Parse { line: 1, .. })));
        let p = write(
            &dir,
            "s.csv",
            "country_code,period_start,rate\nA,1950,1\nA,1955,1\nA,1965,1\n",
        );
        assert!(matches!(load_rate_panel(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn leading_missing_allowed_interior_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "country_code,period_start,rate\nA,1950,1\nA,1955,2\nA,1960,3\nB,1955,NA\nB,1960,4\n",
        );
        let panel = load_rate_panel(&p).unwrap();
        assert_eq!(panel.first_observed(1), 2);
        assert_eq!(panel.observed(1), vec![4.0]);
        assert!(panel.validate_for_fit().is_err());

        let p = write(
            &dir,
            "g.csv",
            "country_code,period_start,rate\nA,1950,1\nA,1955,\nA,1960,3\n",
        );
        assert!(matches!(load_rate_panel(&p), Err(Error::Validation(m)) if m.contains("gap")));
    }

    #[test]
    fn large_panel_shape() {
        let codes: Vec<String> = (0..197).map(|i| format!("C{i:03}")).collect();
        let periods: Vec<i32> = (0..12).map(|i| 1950 + 5 * i).collect();
        let mut body = String::from("country_code,period_start,rate\n");
        for c in &codes {
            for p in &periods {
                body.push_str(&format!("{c},{p},0.5\n"));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let panel = load_rate_panel(write(&dir, "r.csv", &body)).unwrap();
        assert_eq!((panel.n_countries(), panel.n_periods()), (197, 12));
        assert_eq!(*panel.period_starts().last().unwrap(), 2005);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let panel = RatePanel::new(
            vec!["AAA".into(), "BBB".into()],
            vec![1950, 1955, 1960],
            vec![None, Some(0.1), Some(-3.25), Some(1e-17), Some(2.0), Some(7.0)],
        )
        .unwrap();
        let p = dir.path().join("r.csv");
        save_rate_panel(&panel, &p).unwrap();
        assert_eq!(load_rate_panel(&p).unwrap(), panel);

        let pops = PopulationPanel::new(
            vec!["AAA".into(), "BBB".into()],
            vec![2000, 2005],
            vec![1.5, 2.0, 1e6, 0.3],
        )
        .unwrap();
        let p = dir.path().join("n.csv");
        save_population_panel(&pops, &p).unwrap();
        assert_eq!(load_population_panel(&p).unwrap(), pops);
    }

    #[test]
    fn schedules_validate() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            &dir,
            "s.csv",
            "country_code,age_group,sex,fraction\nA,all,both,1.0\n",
        );
        let set = load_schedules(&ok).unwrap();
        assert_eq!(set.n_cells(), 1);

        let two = write(
            &dir,
            "t.csv",
            "country_code,age_group,sex,fraction\nA,0-14,f,0.6\nA,0-14,m,0.4\n",
        );
        let set = load_schedules(&two).unwrap();
        assert_eq!(set.fractions_for(&["A".into()]).unwrap(), vec![vec![0.6, 0.4]]);
        let p = dir.path().join("round.csv");
        save_schedules(&set, &p).unwrap();
        assert_eq!(load_schedules(&p).unwrap(), set);

        let short = write(
            &dir,
            "u.csv",
            "country_code,age_group,sex,fraction\nA,0-14,f,0.58\nA,0-14,m,0.4\n",
        );
        assert!(matches!(load_schedules(&short), Err(Error::Validation(_))));

        let neg = write(
            &dir,
            "v.csv",
            "country_code,age_group,sex,fraction\nA,0-14,f,1.5\nA,0-14,m,-0.5\n",
        );
        assert!(matches!(load_schedules(&neg), Err(Error::Validation(_))));

        let near = write(
            &dir,
            "w.csv",
            "country_code,age_group,sex,fraction\nA,x,f,0.5000004\nA,x,m,0.5\n",
        );
        let set = load_schedules(&near).unwrap();
        let sum: f64 = set.get("A").unwrap().cells.values().sum();
        assert!((sum - 1.0).abs() < 1e-15);

        assert!(matches!(
            set.fractions_for(&["ZZZ".into()]),
            Err(Error::MissingSchedule(c)) if c == "ZZZ"
        ));
    }

    #[test]
    fn mismatched_layouts_rejected() {
        let mut a = BTreeMap::new();
        a.insert(CellKey::new("x", "f"), 1.0);
        let mut b = BTreeMap::new();
        b.insert(CellKey::new("y", "f"), 1.0);
        let res = ScheduleSet::new(vec![
            MigrationSchedule { country_code: "A".into(), cells: a },
            MigrationSchedule { country_code: "B".into(), cells: b },
        ]);
        assert!(res.is_err());
    }

    #[test]
    fn counts_examples() {
        assert_eq!(counts_from_rates(&[5.0], &[2000.0]).unwrap(), vec![10_000.0]);
        assert_eq!(counts_from_rates(&[0.0, 0.0], &[1.0, 1e9]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            counts_from_rates(&[1.0], &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn counts_round_trip_random() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        for _ in 0..1000 {
            let r: f64 = rng.random_range(-50.0..50.0);
            let n: f64 = 10f64.powf(rng.random_range(-1.0..6.0));
            let back = rates_from_counts(&counts_from_rates(&[r], &[n]).unwrap(), &[n]).unwrap()[0];
            assert!((back - r).abs() <= 1e-12 * r.abs().max(1e-300));
        }
    }

    proptest! {
        #[test]
        fn counts_are_linear_in_rate(r in -100.0f64..100.0, n in 0.1f64..1e6, k in -10.0f64..10.0) {
            let lhs = counts_from_rates(&[k * r], &[n]).unwrap()[0];
            let rhs = k * counts_from_rates(&[r], &[n]).unwrap()[0];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-12));
        }
    }
}
