//! Gravity baseline: exact recovery on noiseless data, then a per-country fit
//! of a synthetic panel and rate projections from it.
//!
//!     cargo run --example gravity_baseline

use netmig::baselines::{fit_panel, gravity_fit, project_panel_rates, Exponents, GravityParams};
use netmig::synth::{simulate_panel, SynthConfig};

fn main() -> netmig::Result<()> {
    let exps = Exponents::default();
    let truth = GravityParams { a: 3.42e-4, b: -8.33e-4, exponents: exps };
    // own and rest-of-world populations in millions
    let own: Vec<f64> = (0..12).map(|t| 150.0 * 1.06f64.powi(t)).collect();
    let rest: Vec<f64> = (0..12).map(|t| 2400.0 * 1.09f64.powi(t)).collect();
    let net: Vec<f64> = own.iter().zip(&rest).map(|(l, m)| truth.predict(*l, *m)).collect();
    let fit = gravity_fit(&net, &own, &rest, exps)?;
    println!("recovered a = {:.6e}, b = {:.6e}", fit.a, fit.b);

    let data = simulate_panel(&SynthConfig::default(), 4)?;
    let fits = fit_panel(&data.rates, &data.populations, exps, None)?;
    let future = [2010, 2030, 2050];
    let proj = project_panel_rates(&fits, &data.populations, &future)?;
    for (c, f) in fits.iter().enumerate().take(5) {
        println!(
            "{}: a {:>10.3e} b {:>10.3e}  rates {:?}",
            f.country_code,
            f.params.a,
            f.params.b,
            proj[c].iter().map(|r| (r * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
    Ok(())
}
