//! Split-chain R-hat and multi-chain effective sample size.
//!
//! Both follow the classic Gelman-Rubin / Geyer construction: chains are
//! trimmed to the shortest length, R-hat is computed over half-chains, and
//! ESS truncates the combined autocorrelation sum at the first non-positive
//! pair of consecutive lags (initial positive sequence, made monotone).

use super::PosteriorSample;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn trimmed(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    chains.iter().map(|c| &c[..n]).collect()
}

/// Potential scale reduction over split half-chains. Returns `NaN` when
/// fewer than 4 draws per chain are available and `1.0` for constant traces.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let chains = trimmed(chains);
    let n = chains.first().map_or(0, |c| c.len()) / 2;
    if n < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[c.len() - n..]])
        .collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = mean(&halves.iter().map(|h| variance(h)).collect::<Vec<_>>());
    let between = n as f64 * variance(&means);
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = n as f64;
    (((nf - 1.0) / nf * within + between / nf) / within).sqrt()
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size of the pooled draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let chains = trimmed(chains);
    let m = chains.len();
    let n = chains.first().map_or(0, |c| c.len());
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0)).collect();
    let mean_var = mean(&acov0.iter().map(|a| a * nf / (nf - 1.0)).collect::<Vec<_>>());
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += variance(&means);
    }
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let rho = |lag: usize| -> f64 {
        let acov = mean(
            &chains
                .iter()
                .zip(&means)
                .map(|(c, &mu)| autocov(c, mu, lag))
                .collect::<Vec<_>>(),
        );
        1.0 - (mean_var - acov) / var_plus
    };

    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum).max(1.0 / (m * n) as f64);
    (m * n) as f64 / tau
}

/// R-hat and ESS for every scalar parameter of the sample.
pub fn diagnostics(sample: &PosteriorSample) -> Vec<ParamDiagnostic> {
    sample
        .parameter_names()
        .into_iter()
        .zip(sample.all_traces())
        .map(|(name, traces)| ParamDiagnostic {
            name,
            rhat: split_rhat(&traces),
            ess: effective_sample_size(&traces),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substreams;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chains(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        substreams(seed, m)
            .into_iter()
            .map(|mut r| (0..n).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect()
    }

    #[test]
    fn iid_chains_have_unit_rhat() {
        let chains = normal_chains(1, 4, 5000);
        let r = split_rhat(&chains);
        assert!((0.99..=1.01).contains(&r), "{r}");
        let ess = effective_sample_size(&chains);
        assert!(ess > 15_000.0, "{ess}");
    }

    #[test]
    fn shifted_chain_inflates_rhat() {
        let mut chains = normal_chains(2, 4, 1000);
        for x in &mut chains[0] {
            *x += 10.0;
        }
        assert!(split_rhat(&chains) > 1.5);
    }

    #[test]
    fn ar1_chain_ess_fraction() {
        // Integrated autocorrelation time of AR(1) with rho = 0.5 is
        // (1 + rho) / (1 - rho) = 3.
        let rho: f64 = 0.5;
        let innov = (1.0 - rho * rho).sqrt();
        let chains: Vec<Vec<f64>> = substreams(3, 4)
            .into_iter()
            .map(|mut r| {
                let mut x: f64 = StandardNormal.sample(&mut r);
                (0..20_000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut r);
                        x = rho * x + innov * e;
                        x
                    })
                    .collect()
            })
            .collect();
        let frac = effective_sample_size(&chains) / 80_000.0;
        assert!((0.28..=0.39).contains(&frac), "{frac}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(split_rhat(&[vec![1.0, 2.0]]).is_nan());
        assert_eq!(split_rhat(&[vec![1.0; 10], vec![1.0; 10]]), 1.0);
        assert!(effective_sample_size(&[vec![1.0; 3]]).is_nan());
    }
}
