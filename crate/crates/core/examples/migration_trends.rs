//! Descriptive statistics of a rate panel and of projected trajectories:
//! share of the world migrating, mean absolute rate, and sign reversals.
//!
//!     cargo run --release --example migration_trends

use std::collections::BTreeMap;

use netmig::evaluation::{
    group_mean_change, growth, mamr_t, parity_change_fraction, projected_parity_change, prop_t, trajectory_trends,
};
use netmig::projector::{simulate, ProjectionConfig, Quantiles};
use netmig::sampler::{run_chains, SamplerConfig};
use netmig::synth::{simulate_panel, SynthConfig};

fn main() -> netmig::Result<()> {
    let data = simulate_panel(&SynthConfig::default(), 8)?;
    let rates = &data.rates;
    let prop = prop_t(rates, &data.populations)?;
    let mamr = mamr_t(rates);
    for (t, p) in rates.period_starts().iter().enumerate() {
        println!("{p}  prop {:>5.2}  mamr {:>5.2}", prop[t], mamr[t]);
    }
    let last = rates.n_periods() - 1;
    println!("growth first->last: prop {:+.0}%, mamr {:+.0}%", 100.0 * growth(&prop, 0, last), 100.0 * growth(&mamr, 0, last));
    let first_start = rates.period_starts()[0];
    let last_start = rates.period_starts()[last];
    println!(
        "countries that switched sign {first_start}->{last_start}: {:.0}%",
        100.0 * parity_change_fraction(rates, first_start, last_start)?
    );

    let mut config = SamplerConfig::with_seed(2);
    config.n_iter = 4000;
    config.n_burnin = 2000;
    let post = run_chains(rates, &config)?;
    let ts = simulate(&post, rates, &data.populations, &data.schedules, &ProjectionConfig::new(2060, 3))?;
    let target = *ts.period_starts.last().unwrap();
    let baseline = rates.last_rates();
    println!(
        "expected share switching sign by {target}: {:.0}%",
        100.0 * projected_parity_change(&ts, &baseline, target)?
    );

    let groups: BTreeMap<String, String> = rates
        .country_codes()
        .iter()
        .zip(&baseline)
        .map(|(c, r)| (c.clone(), if *r >= 0.0 { "receiving" } else { "sending" }.to_string()))
        .collect();
    for (g, d) in group_mean_change(&ts, &baseline, &groups, target)? {
        println!("{g:<10} mean change of median rate: {d:+.2}");
    }

    let (props, _) = trajectory_trends(&ts, &data.populations)?;
    let q = Quantiles::from_values(props.last().unwrap().clone());
    println!("prop in {target}: median {:.2}, 80% [{:.2}, {:.2}]", q.median, q.p10, q.p90);
    Ok(())
}
