//! Point-forecast baselines: persistence and the gravity model.
//!
//! The gravity model writes a country's annual net migration (millions) as
//! `a L^alpha M^beta - b L^gamma M^delta`, where `L` is the country's
//! population and `M` the population of the rest of the world, both in
//! millions. Exponents are fixed; `a` and `b` are fitted per country by
//! least squares without an intercept. No zero-sum constraint is applied.

use std::path::Path;

use crate::data::{fmt_f64, write_err, PopulationPanel, RatePanel};
use crate::error::{Error, Result};

/// `[country][period]` point projections.
pub fn persistence_project(last_rates: &[f64], n_periods: usize) -> Vec<Vec<f64>> {
    last_rates.iter().map(|&r| vec![r; n_periods]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents {
            alpha: 0.728,
            beta: 0.602,
            gamma: 0.373,
            delta: 0.948,
        }
    }
}

impl Exponents {
    pub fn regressors(&self, l: f64, m: f64) -> (f64, f64) {
        (l.powf(self.alpha) * m.powf(self.beta), l.powf(self.gamma) * m.powf(self.delta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityParams {
    /// In-migration constant.
    pub a: f64,
    /// Out-migration constant; may be negative.
    pub b: f64,
    pub exponents: Exponents,
}

impl GravityParams {
    pub fn predict(&self, l: f64, m: f64) -> f64 {
        let (x, y) = self.exponents.regressors(l, m);
        self.a * x - self.b * y
    }
}

/// Double-double accumulator (about 106 bits of mantissa).
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = Dd::two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = Dd::two_sum(s, e);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = Dd::two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = Dd::two_sum(p, e);
        Dd { hi, lo }
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

fn dot(a: &[f64], b: &[f64]) -> Dd {
    a.iter()
        .zip(b)
        .fold(Dd::default(), |acc, (x, y)| acc.add(Dd::from(*x).mul(Dd::from(*y))))
}

/// Least-squares fit of `y = a X - b Y` (no intercept), where
/// `X = L^alpha M^beta` and `Y = L^gamma M^delta`.
///
/// `net` is annual net migration in millions, `own` and `rest` the country
/// and rest-of-world populations in millions, all per historical period.
pub fn gravity_fit(net: &[f64], own: &[f64], rest: &[f64], exponents: Exponents) -> Result<GravityParams> {
    if net.len() != own.len() || net.len() != rest.len() {
        return Err(Error::Dimension(format!(
            "{} net values, {} own and {} rest-of-world populations",
            net.len(),
            own.len(),
            rest.len()
        )));
    }
    if net.len() < 2 {
        return Err(Error::Validation("gravity fit needs at least 2 periods".into()));
    }
    if own.iter().chain(rest).any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Validation("gravity populations must be positive".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = own.iter().zip(rest).map(|(&l, &m)| exponents.regressors(l, m)).unzip();
    // Normal equations in (a, c) with c = -b:  [Sxx Sxy; Sxy Syy] (a, c) = (Sxz, Syz)
    let sxx = dot(&xs, &xs);
    let syy = dot(&ys, &ys);
    let sxy = dot(&xs, &ys);
    let sxz = dot(&xs, net);
    let syz = dot(&ys, net);
    let det = sxx.mul(syy).add(sxy.mul(sxy).neg());
    let scale = sxx.value() * syy.value();
    if det.value().is_nan() || det.value().abs() <= 1e-24 * scale {
        return Err(Error::Singular(
            "gravity regressors are collinear across all periods".into(),
        ));
    }
    let det = det.value();
    let a = syy.mul(sxz).add(sxy.mul(syz).neg()).value() / det;
    let c = sxx.mul(syz).add(sxy.mul(sxz).neg()).value() / det;
    Ok(GravityParams {
        a,
        b: -c,
        exponents,
    })
}

/// Net migration (millions per year) for projected populations.
pub fn gravity_project(params: &GravityParams, own: &[f64], rest: &[f64]) -> Result<Vec<f64>> {
    if own.len() != rest.len() {
        return Err(Error::Dimension(format!(
            "{} own against {} rest-of-world populations",
            own.len(),
            rest.len()
        )));
    }
    Ok(own.iter().zip(rest).map(|(&l, &m)| params.predict(l, m)).collect())
}

/// Sum of squared deviations of the fitted series.
pub fn gravity_sse(params: &GravityParams, net: &[f64], own: &[f64], rest: &[f64]) -> f64 {
    net.iter()
        .zip(own.iter().zip(rest))
        .map(|(y, (&l, &m))| {
            let e = y - params.predict(l, m);
            e * e
        })
        .sum()
}

/// Rate per thousand from net millions and own population in millions.
pub fn gravity_rate(net_millions: f64, own_millions: f64) -> f64 {
    1000.0 * net_millions / own_millions
}

/// Own and rest-of-world populations (millions) for every country of
/// `codes` at `period_start`, the world being the listed countries.
pub fn world_split(populations: &PopulationPanel, codes: &[String], period_start: i32) -> Result<(Vec<f64>, Vec<f64>)> {
    let own: Vec<f64> = populations
        .column_for(codes, period_start)?
        .into_iter()
        .map(|p| p / 1000.0)
        .collect();
    let world: f64 = own.iter().sum();
    let rest = own.iter().map(|l| world - l).collect();
    Ok((own, rest))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountryGravity {
    pub country_code: String,
    pub params: GravityParams,
}

/// Fits every country of `panel` on its observed periods within
/// `[first, last]` period starts (all periods when `None`).
pub fn fit_panel(
    panel: &RatePanel,
    populations: &PopulationPanel,
    exponents: Exponents,
    period_range: Option<(i32, i32)>,
) -> Result<Vec<CountryGravity>> {
    let codes = panel.country_codes();
    let (lo, hi) = period_range.unwrap_or((i32::MIN, i32::MAX));
    let periods: Vec<(usize, i32)> = panel
        .period_starts()
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, p)| p >= lo && p <= hi)
        .collect();
    let splits: Vec<(Vec<f64>, Vec<f64>)> = periods
        .iter()
        .map(|&(_, p)| world_split(populations, codes, p))
        .collect::<Result<_>>()?;
    codes
        .iter()
        .enumerate()
        .map(|(c, code)| {
            let mut net = Vec::new();
            let mut own = Vec::new();
            let mut rest = Vec::new();
            for (&(t, _), (l, m)) in periods.iter().zip(&splits) {
                if let Some(r) = panel.get(c, t) {
                    // rate * thousands = persons; / 1e6 = millions
                    net.push(r * l[c] * 1000.0 / 1e6);
                    own.push(l[c]);
                    rest.push(m[c]);
                }
            }
            let params = gravity_fit(&net, &own, &rest, exponents)
                .map_err(|e| Error::Validation(format!("gravity fit for {code}: {e}")))?;
            Ok(CountryGravity {
                country_code: code.clone(),
                params,
            })
        })
        .collect()
}

/// Gravity projections converted to rates, `[country][period]`.
pub fn project_panel_rates(
    fits: &[CountryGravity],
    populations: &PopulationPanel,
    period_starts: &[i32],
) -> Result<Vec<Vec<f64>>> {
    let codes: Vec<String> = fits.iter().map(|f| f.country_code.clone()).collect();
    let splits: Vec<(Vec<f64>, Vec<f64>)> = period_starts
        .iter()
        .map(|&p| world_split(populations, &codes, p))
        .collect::<Result<_>>()?;
    Ok(fits
        .iter()
        .enumerate()
        .map(|(c, f)| {
            splits
                .iter()
                .map(|(own, rest)| gravity_rate(f.params.predict(own[c], rest[c]), own[c]))
                .collect()
        })
        .collect())
}

pub fn write_gravity_params(fits: &[CountryGravity], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["country_code", "a", "b"]).map_err(|e| write_err(path, e))?;
    for f in fits {
        w.write_record([f.country_code.clone(), fmt_f64(f.params.a), fmt_f64(f.params.b)])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_pops(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| (rng.random_range(1.0..500.0), rng.random_range(2000.0..7000.0)))
            .unzip()
    }

    #[test]
    fn persistence_examples() {
        assert_eq!(persistence_project(&[2.5], 3), vec![vec![2.5; 3]]);
        assert_eq!(persistence_project(&[-1.0, 4.0], 2), vec![vec![-1.0, -1.0], vec![4.0, 4.0]]);
    }

    #[test]
    fn zero_response_gives_zero_params() {
        let (l, m) = random_pops(10, 1);
        let p = gravity_fit(&[0.0; 10], &l, &m, Exponents::default()).unwrap();
        assert_eq!((p.a, p.b), (0.0, 0.0));
    }

    #[test]
    fn exact_recovery() {
        let (l, m) = random_pops(12, 2);
        let e = Exponents::default();
        let y: Vec<f64> = l
            .iter()
            .zip(&m)
            .map(|(&l, &m)| {
                let (x, yy) = e.regressors(l, m);
                2.0 * x - 3.0 * yy
            })
            .collect();
        let p = gravity_fit(&y, &l, &m, e).unwrap();
        assert!((p.a / 2.0 - 1.0).abs() < 1e-10, "{}", p.a);
        assert!((p.b / 3.0 - 1.0).abs() < 1e-10, "{}", p.b);
        let back = gravity_project(&p, &l, &m).unwrap();
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn collinear_regressors_are_singular() {
        // Constant populations make X and Y proportional across periods.
        let l = vec![5.0; 6];
        let m = vec![100.0; 6];
        assert!(matches!(
            gravity_fit(&[1.0; 6], &l, &m, Exponents::default()),
            Err(Error::Singular(_))
        ));
        assert!(gravity_fit(&[1.0], &[1.0], &[2.0], Exponents::default()).is_err());
    }

    #[test]
    fn constant_populations_project_constant() {
        let p = GravityParams { a: 1e-3, b: 2e-3, exponents: Exponents::default() };
        let out = gravity_project(&p, &[5.0; 4], &[100.0; 4]).unwrap();
        let (x, y) = p.exponents.regressors(5.0, 100.0);
        assert!(out.iter().all(|v| *v == 1e-3 * x - 2e-3 * y));
        let zero = GravityParams { a: 0.0, b: 0.0, ..p };
        assert!(gravity_project(&zero, &[5.0; 3], &[9.0; 3]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fit_is_a_local_minimum() {
        let mut rng = seeded(3);
        for seed in 0..20 {
            let (l, m) = random_pops(12, 100 + seed);
            let y: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = gravity_fit(&y, &l, &m, Exponents::default()).unwrap();
            let best = gravity_sse(&p, &y, &l, &m);
            for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
                let q = GravityParams { a: p.a + da, b: p.b + db, ..p };
                assert!(gravity_sse(&q, &y, &l, &m) >= best);
            }
        }
    }

    #[test]
    fn panel_fit_units() {
        // One country with net = 2 X - 3 Y (millions); rates are derived from it.
        let e = Exponents::default();
        let codes = vec!["AAA".to_string(), "BBB".to_string()];
        let periods: Vec<i32> = (0..6).map(|i| 1950 + 5 * i).collect();
        let mut rng = seeded(4);
        let mut pops = Vec::new();
        for _ in 0..2 {
            for _ in 0..6 {
                pops.push(rng.random_range(1e3..1e6));
            }
        }
        let popp = PopulationPanel::new(codes.clone(), periods.clone(), pops.clone()).unwrap();
        let mut rows = vec![vec![0.0; 6]; 2];
        for t in 0..6 {
            let (own, rest) = world_split(&popp, &codes, periods[t]).unwrap();
            for c in 0..2 {
                let (x, y) = e.regressors(own[c], rest[c]);
                let net = 2e-4 * x - 3e-4 * y;
                rows[c][t] = gravity_rate(net, own[c]);
            }
        }
        let panel = RatePanel::from_rows(codes, periods.clone(), &rows).unwrap();
        let fits = fit_panel(&panel, &popp, e, None).unwrap();
        for f in &fits {
            assert!((f.params.a / 2e-4 - 1.0).abs() < 1e-9);
            assert!((f.params.b / 3e-4 - 1.0).abs() < 1e-9);
        }
        let proj = project_panel_rates(&fits, &popp, &periods).unwrap();
        for c in 0..2 {
            for t in 0..6 {
                assert!((proj[c][t] - rows[c][t]).abs() < 1e-9 * rows[c][t].abs().max(1e-9));
            }
        }
    }
}
