//! Fit the hierarchical model to a panel simulated from known parameters and
//! compare posterior means with the truth.
//!
//!     cargo run --release --example fit_synthetic

use netmig::sampler::{diagnostics, run_chains, SamplerConfig};
use netmig::synth::{simulate_panel, SynthConfig};

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn main() -> netmig::Result<()> {
    let data = simulate_panel(&SynthConfig::default(), 7)?;
    let mut config = SamplerConfig::with_seed(11);
    config.n_iter = 6000;
    config.n_burnin = 3000;
    config.thin = 5;
    let post = run_chains(&data.rates, &config)?;
    println!("{} draws from {} chains", post.draws.len(), post.n_chains);

    println!("{:<8} {:>9} {:>9}", "param", "truth", "post.mean");
    for (c, code) in data.rates.country_codes().iter().enumerate().take(5) {
        let m = mean(post.draws.iter().map(|d| d.state.countries[c].mu));
        println!("mu[{code}] {:>9.3} {:>9.3}", data.truth.countries[c].mu, m);
    }
    let h = data.truth.hyper;
    for (name, truth, est) in [
        ("lambda", h.lambda, mean(post.draws.iter().map(|d| d.state.hyper.lambda))),
        ("tau", h.tau, mean(post.draws.iter().map(|d| d.state.hyper.tau))),
        ("a", h.a, mean(post.draws.iter().map(|d| d.state.hyper.a))),
        ("b", h.b, mean(post.draws.iter().map(|d| d.state.hyper.b))),
    ] {
        println!("{name:<8} {truth:>9.3} {est:>9.3}");
    }

    let worst = diagnostics(&post)
        .into_iter()
        .max_by(|x, y| x.rhat.total_cmp(&y.rhat))
        .unwrap();
    println!("largest R-hat: {} = {:.3} (ESS {:.0})", worst.name, worst.rhat, worst.ess);
    for (k, a) in post.acceptance.iter().enumerate() {
        println!("chain {k}: acceptance phi {:.2} tau {:.2} (a,b) {:.2}", a.phi, a.tau, a.ab);
    }
    Ok(())
}
