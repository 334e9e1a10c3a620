//! Split R-hat and effective sample size for a short and a longer run.
//!
//!     cargo run --release --example convergence_diagnostics

use netmig::sampler::{diagnostics, run_chains, SamplerConfig};
use netmig::synth::{simulate_panel, SynthConfig};

fn main() -> netmig::Result<()> {
    let data = simulate_panel(&SynthConfig { n_countries: 30, ..SynthConfig::default() }, 12)?;
    for iters in [400, 8000] {
        let mut config = SamplerConfig::with_seed(4);
        config.n_iter = iters;
        config.n_burnin = iters / 2;
        config.thin = 2;
        let post = run_chains(&data.rates, &config)?;
        let diag = diagnostics(&post);
        let max_rhat = diag.iter().map(|d| d.rhat).fold(f64::MIN, f64::max);
        let min_ess = diag.iter().map(|d| d.ess).fold(f64::MAX, f64::min);
        println!("{iters:>5} iterations: max R-hat {max_rhat:.3}, min ESS {min_ess:.0} of {} draws", post.draws.len());
        for d in diag.iter().filter(|d| !d.name.contains('[')) {
            println!("    {:<7} R-hat {:.3}  ESS {:>6.0}", d.name, d.rhat, d.ess);
        }
    }
    Ok(())
}
