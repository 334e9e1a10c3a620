//! Posterior predictive trajectories to 2100 with the zero-sum correction,
//! summarised as median and 80% / 95% intervals.
//!
//!     cargo run --release --example project_trajectories

use netmig::projector::{simulate, summarize, ProjectionConfig};
use netmig::sampler::{run_chains, SamplerConfig};
use netmig::synth::{simulate_panel, SynthConfig};

fn main() -> netmig::Result<()> {
    let data = simulate_panel(&SynthConfig::default(), 3)?;
    let mut config = SamplerConfig::with_seed(5);
    config.n_iter = 4000;
    config.n_burnin = 2000;
    let post = run_chains(&data.rates, &config)?;

    let ts = simulate(
        &post,
        &data.rates,
        &data.populations,
        &data.schedules,
        &ProjectionConfig::new(2100, 9),
    )?;
    println!(
        "{} trajectories, periods {}..{}, worst cell imbalance {:.1e}",
        ts.n_draws,
        ts.period_starts[0],
        ts.period_starts.last().unwrap(),
        ts.max_imbalance()
    );

    let summary = summarize(&ts);
    let last = data.rates.last_rates();
    for (c, code) in ts.country_codes.iter().enumerate().take(3) {
        println!("\n{code} (last observed {:.2})", last[c]);
        println!("{:>6} {:>8} {:>17} {:>17}", "start", "median", "80%", "95%");
        for (t, p) in ts.period_starts.iter().enumerate().step_by(3) {
            let q = summary.get(c, t);
            println!(
                "{p:>6} {:>8.2}  [{:>6.2},{:>6.2}]  [{:>6.2},{:>6.2}]",
                q.median, q.p10, q.p90, q.p2_5, q.p97_5
            );
        }
    }
    Ok(())
}
