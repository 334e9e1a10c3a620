//! Command-line front end. Stages hand off through files so each can be
//! rerun on its own; every successful command leaves a `manifest.json`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{fit_panel, project_panel_rates, write_gravity_params, Exponents};
use crate::data::{
    fmt_f64, load_population_panel, load_rate_panel, load_schedules, save_population_panel, save_rate_panel,
    save_schedules, write_err, PopulationPanel, RatePanel, ScheduleSet,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_holdout, mamr_t, prop_t, trajectory_trends, write_eval_report, EvalReport, EvalSettings, Model};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::projector::{
    future_periods, read_trajectories_csv, simulate, summarize, write_summary_csv, write_trajectories_csv,
    ProjectionConfig, Quantiles,
};
use crate::sampler::{
    diagnostics, read_posterior_cache, read_posterior_csv, run_chains, write_posterior_cache, write_posterior_csv,
    PosteriorSample, SamplerConfig,
};
use crate::synth::{save_truth, simulate_panel, SynthConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, missing or malformed argument)
  3  input/output error (missing or unreadable file)
  4  malformed input file
  5  data invariant violated (validation, dimensions, schedules, horizon)
  6  invalid configuration
  7  numerical failure (singular fit, non-finite log-density)
  8  corrupt posterior cache

Errors are printed to stderr as one line:
  error kind=<kind> code=<exit code> msg=\"<message>\"";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => 3,
        Error::Parse { .. } => 4,
        Error::Validation(_) | Error::Dimension(_) | Error::MissingSchedule(_) | Error::Horizon(_) => 5,
        Error::Config(_) => 6,
        Error::Singular(_) | Error::NonFinite { .. } => 7,
        Error::Cache(_) => 8,
    }
}

/// Quotes a message onto one line.
fn one_line(msg: &str) -> String {
    msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

#[derive(Debug, Parser)]
#[command(name = "netmig", version, about = "Probabilistic projection of net international migration rates", after_help = EXIT_CODES)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior of the hierarchical AR(1) model.
    #[command(after_help = EXIT_CODES)]
    Fit(FitArgs),
    /// Simulate zero-sum corrected trajectories from a fitted posterior.
    #[command(after_help = EXIT_CODES)]
    Project(ProjectArgs),
    /// Hold out recent periods and score forecasts.
    #[command(after_help = EXIT_CODES)]
    Evaluate(EvaluateArgs),
    /// Global migration intensity series, observed and projected.
    #[command(after_help = EXIT_CODES)]
    Trends(TrendsArgs),
    /// Fit the gravity baseline per country.
    #[command(after_help = EXIT_CODES)]
    Gravity(GravityArgs),
    /// Generate a synthetic panel from the model.
    #[command(hide = true)]
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplerArgs {
    /// Iterations per chain, burn-in included.
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    /// Burn-in iterations (default: half of --iters).
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 3)]
    pub chains: usize,
    /// Keep proposal scales fixed during burn-in.
    #[arg(long)]
    pub no_adapt: bool,
}

impl SamplerArgs {
    fn config(&self, seed: u64) -> SamplerConfig {
        let mut c = SamplerConfig::with_seed(seed);
        c.n_iter = self.iters;
        c.n_burnin = self.burnin.unwrap_or(self.iters / 2);
        c.thin = self.thin;
        c.n_chains = self.chains;
        c.adapt_burnin = !self.no_adapt;
        c
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub rates: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProjectArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub populations: PathBuf,
    /// Age/sex schedules (default: one cell per country).
    #[arg(long)]
    pub schedules: Option<PathBuf>,
    /// Last year of the final projected period.
    #[arg(long, default_value_t = 2100)]
    pub horizon: i32,
    #[arg(long)]
    pub seed: u64,
    /// Skip the zero-sum correction.
    #[arg(long)]
    pub no_correction: bool,
    /// Use at most this many posterior draws, evenly spaced.
    #[arg(long)]
    pub max_draws: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub rates: PathBuf,
    #[arg(long)]
    pub populations: PathBuf,
    #[arg(long)]
    pub schedules: Option<PathBuf>,
    /// Held-out period counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,3,6")]
    pub holdout: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "bayes,persistence,gravity")]
    pub models: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub no_correction: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrendsArgs {
    #[arg(long)]
    pub rates: PathBuf,
    #[arg(long)]
    pub populations: PathBuf,
    /// Trajectory CSV from `project`, summarised per period.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GravityArgs {
    #[arg(long)]
    pub rates: PathBuf,
    #[arg(long)]
    pub populations: PathBuf,
    /// First period start used in the fit.
    #[arg(long)]
    pub from: Option<i32>,
    /// Last period start used in the fit.
    #[arg(long)]
    pub to: Option<i32>,
    /// Also project rates up to this year into `--projection`.
    #[arg(long, requires = "projection")]
    pub horizon: Option<i32>,
    #[arg(long, requires = "horizon")]
    pub projection: Option<PathBuf>,
    /// Parameter CSV `country_code,a,b`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub countries: usize,
    #[arg(long, default_value_t = 12)]
    pub periods: usize,
    #[arg(long, default_value_t = 1950)]
    pub start: i32,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.render().to_string();
            let msg: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            let msg = msg.join(" ");
            eprintln!("error kind=usage code=2 msg=\"{}\"", one_line(msg.trim_start_matches("error: ")));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error kind={} code={code} msg=\"{}\"", e.kind(), one_line(&e.to_string()));
            code
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let go = move || match cli.command {
        Command::Fit(a) => fit(&a),
        Command::Project(a) => project(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Trends(a) => trends(&a),
        Command::Gravity(a) => gravity(&a),
        Command::Synth(a) => synth(&a),
    };
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn manifest_for<A: Serialize>(command: &str, args: &A, seed: Option<u64>) -> RunManifest {
    let mut m = RunManifest::start(command, seed);
    if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(args) {
        flatten_flags(&mut m.flags, "", &map);
    }
    m
}

fn flatten_flags(out: &mut BTreeMap<String, String>, prefix: &str, map: &serde_json::Map<String, serde_json::Value>) {
    for (k, v) in map {
        match v {
            serde_json::Value::Object(inner) => flatten_flags(out, prefix, inner),
            serde_json::Value::String(s) => {
                out.insert(format!("{prefix}{k}"), s.clone());
            }
            other => {
                out.insert(format!("{prefix}{k}"), other.to_string());
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn schedules_or_default(path: Option<&Path>, codes: &[String]) -> Result<ScheduleSet> {
    match path {
        Some(p) => load_schedules(p),
        None => Ok(ScheduleSet::single_cell(codes)),
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let config = args.sampler.config(args.seed);
    config.validate()?;
    let mut manifest = manifest_for("fit", args, Some(args.seed));
    manifest.input(&args.rates)?;
    let panel = load_rate_panel(&args.rates)?;
    let sample = run_chains(&panel, &config)?;
    let out = &args.out;
    create_dir(out)?;
    write_posterior_csv(&sample, out.join("posterior.csv"))?;
    write_posterior_cache(&sample, out.join("posterior.bin"))?;
    write_diagnostics(&sample, &out.join("diagnostics.csv"))?;
    write_acceptance(&sample, &out.join("acceptance.csv"))?;
    save_rate_panel(&panel, out.join("rates.csv"))?;
    for f in ["posterior.csv", "posterior.bin", "diagnostics.csv", "acceptance.csv", "rates.csv"] {
        manifest.output(out.join(f));
    }
    manifest.finish(out.join(MANIFEST_FILE))?;
    println!("fit: {} draws of {} parameters -> {}", sample.draws.len(), 3 * sample.n_countries() + 4, out.display());
    Ok(())
}

fn write_diagnostics(sample: &PosteriorSample, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["param_name", "rhat", "ess"]).map_err(|e| write_err(path, e))?;
    for d in diagnostics(sample) {
        w.write_record([d.name, fmt_f64(d.rhat), fmt_f64(d.ess)])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_acceptance(sample: &PosteriorSample, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["chain", "phi", "tau", "ab"]).map_err(|e| write_err(path, e))?;
    for (k, a) in sample.acceptance.iter().enumerate() {
        w.write_record([k.to_string(), fmt_f64(a.phi), fmt_f64(a.tau), fmt_f64(a.ab)])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads the posterior from a `fit` directory, preferring the binary cache.
pub fn load_posterior(dir: &Path) -> Result<(PosteriorSample, PathBuf)> {
    let bin = dir.join("posterior.bin");
    if bin.exists() {
        return Ok((read_posterior_cache(&bin)?, bin));
    }
    let csv = dir.join("posterior.csv");
    Ok((read_posterior_csv(&csv)?, csv))
}

/// Keeps `max` draws evenly spaced through the sample.
pub fn thin_draws(sample: &mut PosteriorSample, max: usize) {
    let n = sample.draws.len();
    if max == 0 || max >= n {
        return;
    }
    sample.draws = (0..max).map(|i| sample.draws[i * n / max].clone()).collect();
}

fn project(args: &ProjectArgs) -> Result<()> {
    let mut manifest = manifest_for("project", args, Some(args.seed));
    let (mut sample, posterior_path) = load_posterior(&args.posterior)?;
    let rates_path = args.posterior.join("rates.csv");
    manifest.input(&posterior_path)?.input(&rates_path)?.input(&args.populations)?;
    if let Some(s) = &args.schedules {
        manifest.input(s)?;
    }
    let panel = load_rate_panel(&rates_path)?;
    let pops = load_population_panel(&args.populations)?;
    let schedules = schedules_or_default(args.schedules.as_deref(), panel.country_codes())?;
    if let Some(max) = args.max_draws {
        thin_draws(&mut sample, max);
    }
    let mut config = ProjectionConfig::new(args.horizon, args.seed);
    config.correction = !args.no_correction;
    let ts = simulate(&sample, &panel, &pops, &schedules, &config)?;
    let out = &args.out;
    create_dir(out)?;
    write_trajectories_csv(&ts, out.join("trajectories.csv"))?;
    write_summary_csv(&summarize(&ts), out.join("summary.csv"))?;
    manifest.output(out.join("trajectories.csv")).output(out.join("summary.csv"));
    manifest.finish(out.join(MANIFEST_FILE))?;
    println!(
        "project: {} trajectories x {} periods -> {}",
        ts.n_draws,
        ts.n_periods(),
        out.display()
    );
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let models = args
        .models
        .iter()
        .map(|m| Model::parse(m.trim()))
        .collect::<Result<Vec<_>>>()?;
    let sampler = args.sampler.config(args.seed);
    if models.contains(&Model::Bayes) {
        sampler.validate()?;
    }
    let mut manifest = manifest_for("evaluate", args, Some(args.seed));
    manifest.input(&args.rates)?.input(&args.populations)?;
    if let Some(s) = &args.schedules {
        manifest.input(s)?;
    }
    let panel = load_rate_panel(&args.rates)?;
    let pops = load_population_panel(&args.populations)?;
    let schedules = schedules_or_default(args.schedules.as_deref(), panel.country_codes())?;
    let settings = EvalSettings {
        sampler,
        projection_seed: args.seed.wrapping_add(1),
        correction: !args.no_correction,
        exponents: Exponents::default(),
    };
    let mut report = EvalReport::default();
    for &m in &args.holdout {
        report
            .rows
            .extend(evaluate_holdout(&panel, &pops, &schedules, m, &models, &settings)?);
    }
    let out = &args.out;
    create_dir(out)?;
    write_eval_report(&report, out.join("evaluation.csv"))?;
    manifest.output(out.join("evaluation.csv"));
    manifest.finish(out.join(MANIFEST_FILE))?;
    for r in &report.rows {
        println!(
            "evaluate: {:>2}y {:<11} mae={:.3}",
            r.window_years,
            r.model.label(),
            r.mae
        );
    }
    Ok(())
}

fn trends(args: &TrendsArgs) -> Result<()> {
    let mut manifest = manifest_for("trends", args, None);
    manifest.input(&args.rates)?.input(&args.populations)?;
    let panel = load_rate_panel(&args.rates)?;
    let pops = load_population_panel(&args.populations)?;
    let out = &args.out;
    create_dir(out)?;
    write_observed_trends(&panel, &pops, &out.join("trends_observed.csv"))?;
    manifest.output(out.join("trends_observed.csv"));
    if let Some(tp) = &args.trajectories {
        manifest.input(tp)?;
        let ts = read_trajectories_csv(tp)?;
        let (props, mamrs) = trajectory_trends(&ts, &pops)?;
        let path = out.join("trends_projected.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| write_err(&path, e))?;
        w.write_record(["period_start", "statistic", "median", "p10", "p90", "p2_5", "p97_5"])
            .map_err(|e| write_err(&path, e))?;
        for (t, p) in ts.period_starts.iter().enumerate() {
            for (name, values) in [("prop", &props[t]), ("mamr", &mamrs[t])] {
                let q = Quantiles::from_values(values.clone());
                w.write_record([
                    p.to_string(),
                    name.to_string(),
                    fmt_f64(q.median),
                    fmt_f64(q.p10),
                    fmt_f64(q.p90),
                    fmt_f64(q.p2_5),
                    fmt_f64(q.p97_5),
                ])
                .map_err(|e| write_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        manifest.output(&path);
    }
    manifest.finish(out.join(MANIFEST_FILE))?;
    println!("trends: -> {}", out.display());
    Ok(())
}

fn write_observed_trends(panel: &RatePanel, pops: &PopulationPanel, path: &Path) -> Result<()> {
    let prop = prop_t(panel, pops)?;
    let mamr = mamr_t(panel);
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["period_start", "prop", "mamr"]).map_err(|e| write_err(path, e))?;
    for (t, p) in panel.period_starts().iter().enumerate() {
        w.write_record([p.to_string(), fmt_f64(prop[t]), fmt_f64(mamr[t])])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn gravity(args: &GravityArgs) -> Result<()> {
    let mut manifest = manifest_for("gravity", args, None);
    manifest.input(&args.rates)?.input(&args.populations)?;
    let panel = load_rate_panel(&args.rates)?;
    let pops = load_population_panel(&args.populations)?;
    let range = match (args.from, args.to) {
        (None, None) => None,
        (f, t) => Some((f.unwrap_or(i32::MIN), t.unwrap_or(i32::MAX))),
    };
    let fits = fit_panel(&panel, &pops, Exponents::default(), range)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_gravity_params(&fits, &args.out)?;
    manifest.output(&args.out);
    if let (Some(h), Some(path)) = (args.horizon, &args.projection) {
        let last = *panel.period_starts().last().expect("panel has periods");
        let periods = future_periods(last, panel.period_step(), h)?;
        let proj = project_panel_rates(&fits, &pops, &periods)?;
        let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
        w.write_record(["country_code", "period_start", "rate"]).map_err(|e| write_err(path, e))?;
        for (c, f) in fits.iter().enumerate() {
            for (t, p) in periods.iter().enumerate() {
                w.write_record([f.country_code.clone(), p.to_string(), fmt_f64(proj[c][t])])
                    .map_err(|e| write_err(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        manifest.output(path);
    }
    let mut mpath = args.out.clone().into_os_string();
    mpath.push(".manifest.json");
    manifest.finish(PathBuf::from(mpath))?;
    println!("gravity: {} countries -> {}", fits.len(), args.out.display());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_countries: args.countries,
        n_periods: args.periods,
        start_year: args.start,
        population_end_year: (args.start + 5 * args.periods as i32).max(2100),
        ..SynthConfig::default()
    };
    let manifest = manifest_for("synth", args, Some(args.seed));
    let d = simulate_panel(&cfg, args.seed)?;
    let out = &args.out;
    create_dir(out)?;
    save_rate_panel(&d.rates, out.join("rates.csv"))?;
    save_population_panel(&d.populations, out.join("populations.csv"))?;
    save_schedules(&d.schedules, out.join("schedules.csv"))?;
    save_truth(&d.truth, d.rates.country_codes(), out.join("truth.csv"))?;
    let mut manifest = manifest;
    for f in ["rates.csv", "populations.csv", "schedules.csv", "truth.csv"] {
        manifest.output(out.join(f));
    }
    manifest.finish(out.join(MANIFEST_FILE))?;
    println!("synth: {} countries x {} periods -> {}", args.countries, args.periods, out.display());
    Ok(())
}
