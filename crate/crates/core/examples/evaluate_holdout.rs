//! Out-of-sample comparison of the Bayesian model with the persistence and
//! gravity baselines on the most recent 5 and 15 years of a synthetic panel.
//!
//!     cargo run --release --example evaluate_holdout

use netmig::baselines::Exponents;
use netmig::evaluation::{evaluate_holdout, EvalSettings, Model};
use netmig::sampler::SamplerConfig;
use netmig::synth::{simulate_panel, SynthConfig};

fn main() -> netmig::Result<()> {
    let data = simulate_panel(&SynthConfig::default(), 21)?;
    let mut sampler = SamplerConfig::with_seed(1);
    sampler.n_iter = 4000;
    sampler.n_burnin = 2000;
    let settings = EvalSettings {
        sampler,
        projection_seed: 2,
        correction: true,
        exponents: Exponents::default(),
    };
    let models = [Model::Bayes, Model::Persistence, Model::Gravity];

    println!("{:>6} {:<12} {:>7} {:>7} {:>7}", "years", "model", "MAE", "cov80", "cov95");
    for m in [1, 3] {
        for row in evaluate_holdout(&data.rates, &data.populations, &data.schedules, m, &models, &settings)? {
            let pct = |v: Option<f64>| v.map(|x| format!("{:.0}%", 100.0 * x)).unwrap_or_else(|| "-".into());
            println!(
                "{:>6} {:<12} {:>7.2} {:>7} {:>7}",
                row.window_years,
                row.model.label(),
                row.mae,
                pct(row.coverage80),
                pct(row.coverage95)
            );
        }
    }
    Ok(())
}
