//! Command-line surface: `simulate`, `fit` and `compare`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SamplerKind, OUT_ROOT_ENV};
use crate::diagnostics::{carpenter_ess, kde, qq_pairs, weighted_mean_var, weighted_quantile};
use crate::error::{Error, Result};
use crate::io::{ensure_dir, fmt_f64, read_draws, write_bytes, write_draws, write_json, write_rows};
use crate::pipeline::{fit, prepare, FitOutput, Prepared};
use crate::simulate::{default_age_effect, simulate_logit_longitudinal, simulate_poisson, LogitSettings};

#[derive(Debug, Parser)]
#[command(name = "glmm-smc", version, about = "Sequential Monte Carlo for Bayesian GLMMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset with a known truth.
    Simulate(SimulateArgs),
    /// Fit a model with one of the samplers.
    Fit(FitArgs),
    /// Compare completed runs on one parameter.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    Poisson,
    Logit,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub kind: SimKind,
    /// Rows (poisson) or subjects (logit).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Maximum visits per subject (logit).
    #[arg(long)]
    pub visits: Option<usize>,
    /// Random-intercept standard deviation (logit).
    #[arg(long)]
    pub sigma_u: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from a named preset (paper-4.1, paper-4.2-structure).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    /// Sample size for the chosen sampler: particles (smc), draws (is) or
    /// iterations (rwmh, slice).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any config key, e.g. `--set smc.n_stages=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directories; the first is the reference.
    #[arg(required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub param: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub quantiles: usize,
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one subcommand and returns its output directory.
pub fn execute(command: Command) -> Result<PathBuf> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => {
            let config = resolve_fit_config(&a)?;
            cmd_fit(&config)
        }
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

#[derive(Serialize)]
struct SimulateEcho<'a> {
    kind: SimKind,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logit: Option<&'a LogitSettings>,
}

/// Writes `data.csv`, `truth.json` and `config.toml`.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf> {
    if args.n == Some(0) {
        return Err(Error::invalid("--n must be at least 1"));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_root().join(format!("simulate-{:?}-seed{}", args.kind, args.seed).to_lowercase()));
    let mut settings = None;
    let data = match args.kind {
        SimKind::Poisson => simulate_poisson(args.n.unwrap_or(crate::simulate::POISSON_DEFAULT_N), args.seed)?,
        SimKind::Logit => {
            let mut s = LogitSettings::default();
            if let Some(n) = args.n {
                s.n_subjects = n;
            }
            if let Some(v) = args.visits {
                s.n_visits = v;
            }
            if let Some(sd) = args.sigma_u {
                s.sigma_u = sd;
            }
            let d = simulate_logit_longitudinal(&s, default_age_effect, args.seed)?;
            settings = Some(s);
            d
        }
    };
    ensure_dir(&out)?;
    data.table.write_csv(&out.join("data.csv"))?;
    write_json(&out.join("truth.json"), &data.truth)?;
    let echo = SimulateEcho {
        kind: args.kind,
        seed: args.seed,
        n: args.n,
        logit: settings.as_ref(),
    };
    let text = toml::to_string(&echo).map_err(|e| Error::Config(e.to_string()))?;
    write_bytes(&out.join("config.toml"), text.as_bytes())?;
    Ok(out)
}

/// Merges config file, preset, dedicated flags and `--set` overrides (in
/// increasing precedence).
pub fn resolve_fit_config(a: &FitArgs) -> Result<RunConfig> {
    let mut config = match (&a.config, &a.preset) {
        (Some(_), Some(_)) => return Err(Error::Config("use either --config or --preset, not both".into())),
        (Some(path), None) => RunConfig::from_file(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => return Err(Error::Config("fit needs --config or --preset".into())),
    };
    if let Some(d) = &a.data {
        config.model.data = Some(d.clone());
        config.model.simulate = None;
    }
    if let Some(s) = a.sampler {
        config.sampler = s;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
        config.smc.seed = None;
    }
    if let Some(w) = a.workers {
        config.smc.workers = Some(w);
    }
    if let Some(out) = &a.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(n) = a.n {
        if n == 0 {
            return Err(Error::invalid("--n must be at least 1"));
        }
        match config.sampler {
            SamplerKind::Smc => config.smc.n_particles = n,
            SamplerKind::Importance => config.is.n = n,
            SamplerKind::Rwmh | SamplerKind::Slice => config.mcmc.iters = n,
        }
    }
    let config = config.with_overrides(&a.overrides)?;
    config.validate()?;
    Ok(config)
}

#[derive(Serialize, Deserialize)]
struct Timings {
    pql_seconds: f64,
    sampler_seconds: f64,
    total_seconds: f64,
}

/// Run metadata written next to the samples.
#[derive(Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub sampler: String,
    pub group: String,
    pub seed: u64,
    pub n_obs: usize,
    pub n_coef: usize,
    pub n_variance: usize,
    pub pql_converged: bool,
    pub pql_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_depleted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<Vec<f64>>,
    timings: Timings,
}

fn fit_out_dir(config: &RunConfig) -> PathBuf {
    config.out_dir.clone().unwrap_or_else(|| {
        out_root().join(format!("fit-{}-seed{}", config.sampler.name(), config.sampler_seed()))
    })
}

/// Runs the pipeline and writes every artefact of a fit.
pub fn cmd_fit(config: &RunConfig) -> Result<PathBuf> {
    let started = Instant::now();
    let out = fit_out_dir(config);
    let prep = prepare(config)?;
    let result = fit(config, &prep)?;
    ensure_dir(&out)?;
    write_fit(&out, config, &prep, &result, started.elapsed().as_secs_f64())?;
    Ok(out)
}

/// Writes the artefacts of a completed fit into `out`.
pub fn write_fit(out: &Path, config: &RunConfig, prep: &Prepared, result: &FitOutput, total_seconds: f64) -> Result<()> {
    let text = config.to_toml_string()?;
    write_bytes(&out.join("config.toml"), text.as_bytes())?;
    if let Some(sim) = &prep.simulated {
        sim.table.write_csv(&out.join("data.csv"))?;
        write_json(&out.join("truth.json"), &sim.truth)?;
    }
    write_draws(&out.join("samples.csv"), &result.names, &result.draws, result.weights.as_deref())?;
    let header: Vec<String> = ["parameter", "mean", "sd", "lower_2.5", "upper_97.5"].map(String::from).to_vec();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (name, s) in result.names.iter().zip(&result.summaries) {
        w.write_record([name.clone(), fmt_f64(s.mean), fmt_f64(s.sd), fmt_f64(s.lower), fmt_f64(s.upper)])?;
    }
    write_bytes(&out.join("summary.csv"), &w.into_inner().map_err(|e| Error::io(out, e.into_error()))?)?;

    if let Some(trace) = &result.trace {
        write_json(&out.join("trace.json"), trace)?;
        let header: Vec<String> = ["stage", "gamma", "ess", "resampled"].map(String::from).to_vec();
        let rows = trace.ess.iter().enumerate().map(|(i, e)| {
            let s = i + 1;
            vec![s as f64, trace.gammas[s], *e, f64::from(u8::from(trace.resample_stages.contains(&s)))]
        });
        write_rows(&out.join("ess_trace.csv"), &header, rows)?;
    } else if let Some(ess) = result.is_ess {
        let header: Vec<String> = ["stage", "gamma", "ess", "resampled"].map(String::from).to_vec();
        write_rows(&out.join("ess_trace.csv"), &header, [vec![1.0, 1.0, ess, 0.0]])?;
    }
    for curve in &result.curves {
        let header: Vec<String> = vec![curve.predictor.clone(), "f_hat".into(), "mean_response".into()];
        let rows = (0..curve.grid.len()).map(|i| vec![curve.grid[i], curve.f_hat[i], curve.mean_response[i]]);
        write_rows(&out.join(format!("curve_{}.csv", curve.predictor)), &header, rows)?;
    }
    write_json(&out.join("standardisation.json"), &prep.design.standardisations)?;

    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION").into(),
        sampler: config.sampler.name().into(),
        group: config.group_label(),
        seed: config.sampler_seed(),
        n_obs: prep.model.n_obs(),
        n_coef: prep.model.n_coef(),
        n_variance: prep.model.n_blocks(),
        pql_converged: prep.pql.converged(),
        pql_iterations: prep.pql.iterations(),
        is_ess: result.is_ess,
        is_depleted: result.is_depleted,
        acceptance: result.acceptance.clone(),
        timings: Timings {
            pql_seconds: prep.pql_seconds,
            sampler_seconds: result.sampler_seconds,
            total_seconds,
        },
    };
    write_json(&out.join("metadata.json"), &meta)
}

struct LoadedRun {
    dir: PathBuf,
    group: String,
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

fn load_run(dir: &Path, param: &str) -> Result<LoadedRun> {
    let (names, draws, weights) = read_draws(&dir.join("samples.csv"))?;
    let j = names
        .iter()
        .position(|n| n == param)
        .ok_or_else(|| Error::invalid(format!("parameter {param:?} not found in {}", dir.display())))?;
    let meta_path = dir.join("metadata.json");
    let group = match std::fs::read_to_string(&meta_path) {
        Ok(text) => serde_json::from_str::<RunMetadata>(&text)?.group,
        Err(_) => dir.display().to_string(),
    };
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        group,
        values: draws.column(j).iter().copied().collect(),
        weights,
    })
}

fn is_uniform(w: &Option<Vec<f64>>) -> bool {
    match w {
        None => true,
        Some(w) => w.iter().all(|&v| (v - w[0]).abs() <= 1e-12 * w[0].abs()),
    }
}

/// QQ pairs against the first run, overlaid densities, and a cross-run ESS
/// table for every configuration with at least two replicates.
pub fn cmd_compare(args: &CompareArgs) -> Result<PathBuf> {
    if args.quantiles == 0 || args.grid < 2 {
        return Err(Error::invalid("--quantiles must be positive and --grid at least 2"));
    }
    let runs = args.runs.iter().map(|d| load_run(d, &args.param)).collect::<Result<Vec<_>>>()?;
    ensure_dir(&args.out)?;
    let reference = &runs[0];
    let qq_header: Vec<String> = vec!["reference".into(), "other".into()];
    for (i, run) in runs.iter().enumerate().skip(1) {
        let pairs = if is_uniform(&reference.weights) && is_uniform(&run.weights) {
            qq_pairs(&reference.values, &run.values, args.quantiles)?
        } else {
            (1..=args.quantiles)
                .map(|k| {
                    let p = (k as f64 - 0.5) / args.quantiles as f64;
                    Ok((
                        weighted_quantile(&reference.values, reference.weights.as_deref(), p)?,
                        weighted_quantile(&run.values, run.weights.as_deref(), p)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?
        };
        write_rows(
            &args.out.join(format!("qq_{i}_vs_0.csv")),
            &qq_header,
            pairs.into_iter().map(|(a, b)| vec![a, b]),
        )?;
    }

    let lo = runs.iter().flat_map(|r| r.values.iter()).copied().fold(f64::INFINITY, f64::min);
    let hi = runs.iter().flat_map(|r| r.values.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-12);
    let grid: Vec<f64> = (0..args.grid)
        .map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / (args.grid - 1) as f64)
        .collect();
    let mut notices = Vec::new();
    let mut columns = vec![grid.clone()];
    let mut kde_header = vec![args.param.clone()];
    for (i, run) in runs.iter().enumerate() {
        match kde(&run.values, run.weights.as_deref(), &grid) {
            Ok(d) => {
                columns.push(d);
                kde_header.push(format!("run{i}"));
            }
            Err(e) => notices.push(format!("density for run {i} omitted: {e}")),
        }
    }
    write_rows(
        &args.out.join("kde.csv"),
        &kde_header,
        (0..grid.len()).map(|g| columns.iter().map(|c| c[g]).collect()),
    )?;

    let mut groups: BTreeMap<&str, Vec<&LoadedRun>> = BTreeMap::new();
    for run in &runs {
        groups.entry(run.group.as_str()).or_default().push(run);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "runs", "carpenter_ess", "identical_runs"])?;
    let mut any = false;
    for (group, members) in &groups {
        if members.len() < 2 {
            notices.push(format!("carpenter_ess omitted for {group:?}: only one replicate"));
            continue;
        }
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for r in members {
            let (m, v) = weighted_mean_var(&r.values, r.weights.as_deref())?;
            means.push(m);
            vars.push(v);
        }
        let e = carpenter_ess(&means, &vars)?;
        w.write_record([
            group.to_string(),
            members.len().to_string(),
            fmt_f64(e.value),
            e.identical_runs.to_string(),
        ])?;
        any = true;
    }
    if any {
        write_bytes(
            &args.out.join("carpenter_ess.csv"),
            &w.into_inner().map_err(|e| Error::io(&args.out, e.into_error()))?,
        )?;
    }
    for n in &notices {
        eprintln!("notice: {n}");
    }
    #[derive(Serialize)]
    struct CompareMeta<'a> {
        parameter: &'a str,
        runs: Vec<String>,
        notices: &'a [String],
    }
    write_json(
        &args.out.join("compare.json"),
        &CompareMeta {
            parameter: &args.param,
            runs: runs.iter().map(|r| r.dir.display().to_string()).collect(),
            notices: &notices,
        },
    )?;
    Ok(args.out.clone())
}
