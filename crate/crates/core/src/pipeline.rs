//! End-to-end fitting: data → design → PQL → sampler → summaries.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::baselines::{importance_sampler, rwmh_chain, slice_sampler};
use crate::config::{RunConfig, SamplerKind};
use crate::design::{build_design, ColumnSource, Design};
use crate::diagnostics::{curve_estimate, mean_response_curve, summarize, Summary};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::ModelSpec;
use crate::pql::{pql_fit, PqlFit};
use crate::simulate::{default_age_effect, simulate_logit_longitudinal, simulate_poisson, LogitSettings, SimulatedDataset};
use crate::smc::{run, RunTrace, SmcConfig};
use crate::numerics::SeedTree;

/// Points on each fitted-curve grid.
pub const CURVE_GRID: usize = 200;

/// Data, design, model and initial distribution, ready for any sampler.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: Table,
    pub design: Design,
    pub model: ModelSpec,
    pub pql: PqlFit,
    /// Present when the data were generated rather than read.
    pub simulated: Option<SimulatedDataset>,
    pub pql_seconds: f64,
}

/// Generates the dataset described by a `model.simulate` entry.
pub fn simulate_from_spec(kind: &str, n: usize, seed: u64) -> Result<SimulatedDataset> {
    match kind {
        "poisson" => simulate_poisson(n, seed),
        "logit" => {
            let settings = LogitSettings {
                n_subjects: n,
                ..LogitSettings::default()
            };
            simulate_logit_longitudinal(&settings, default_age_effect, seed)
        }
        other => Err(Error::Config(format!("unknown simulation kind {other:?} (poisson, logit)"))),
    }
}

/// Builds the model from a table according to the config.
pub fn build_model(config: &RunConfig, table: &Table) -> Result<(Design, ModelSpec)> {
    let m = &config.model;
    let design = build_design(table, &m.predictors, m.intercept)?;
    let y = DVector::from_vec(table.numeric(&m.response)?);
    let model = ModelSpec::new(
        y,
        design.c.clone(),
        design.q_beta,
        &design.block_widths,
        m.sigma_beta_sq,
        vec![m.a; design.block_widths.len()],
        m.family,
    )?;
    Ok((design, model))
}

/// Loads or generates data, builds the design and fits the initial distribution.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let (table, simulated) = match (&config.model.data, &config.model.simulate) {
        (Some(path), _) => (Table::read_csv(path).map_err(|e| e.at("data"))?, None),
        (None, Some(spec)) => {
            let d = simulate_from_spec(&spec.kind, spec.n, spec.seed).map_err(|e| e.at("simulate"))?;
            (d.table.clone(), Some(d))
        }
        (None, None) => return Err(Error::Config("model.data is required".into())),
    };
    let (design, model) = build_model(config, &table).map_err(|e| e.at("design"))?;
    let started = Instant::now();
    let pql = match (&config.init.nu, &config.init.sigma_sq) {
        (None, None) => pql_fit(&model, &config.pql),
        (nu, sigma_sq) => {
            let base = if nu.is_none() || sigma_sq.is_none() {
                Some(pql_fit(&model, &config.pql)?)
            } else {
                None
            };
            let nu = match nu {
                Some(v) => DVector::from_vec(v.clone()),
                None => base.as_ref().expect("fitted").nu_hat().clone(),
            };
            let s2 = match sigma_sq {
                Some(v) => v.clone(),
                None => base.as_ref().expect("fitted").sigma_sq_hat().to_vec(),
            };
            PqlFit::from_estimates(&model, nu, s2, config.pql.inflate)
        }
    }
    .map_err(|e| e.at("pql"))?;
    Ok(Prepared {
        table,
        design,
        model,
        pql,
        simulated,
        pql_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Fitted smooth on a raw-scale grid.
#[derive(Debug, Clone, Serialize)]
pub struct CurveOutput {
    pub predictor: String,
    pub grid: Vec<f64>,
    /// `β̂_x x_std + Z û`.
    pub f_hat: Vec<f64>,
    /// Mean response with the other fixed covariates at their averages.
    pub mean_response: Vec<f64>,
}

/// Sampler output with names and summaries.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub sampler: SamplerKind,
    /// Coefficient names followed by variance names.
    pub names: Vec<String>,
    pub draws: DMatrix<f64>,
    /// Normalised weights, for weighted samples.
    pub weights: Option<Vec<f64>>,
    pub summaries: Vec<Summary>,
    pub curves: Vec<CurveOutput>,
    pub trace: Option<RunTrace>,
    pub acceptance: Option<Vec<f64>>,
    /// Weight ESS of the importance sampler.
    pub is_ess: Option<f64>,
    pub is_depleted: Option<bool>,
    pub sampler_seconds: f64,
}

impl FitOutput {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.draws.column(j).iter().copied().collect())
    }

    /// Weighted posterior mean of ν.
    pub fn nu_mean(&self, n_coef: usize) -> DVector<f64> {
        DVector::from_iterator(n_coef, self.summaries.iter().take(n_coef).map(|s| s.mean))
    }
}

/// Runs the configured sampler on a prepared model.
pub fn fit(config: &RunConfig, prep: &Prepared) -> Result<FitOutput> {
    let started = Instant::now();
    let seed = config.sampler_seed();
    let model = &prep.model;
    let mut trace = None;
    let mut acceptance = None;
    let (mut is_ess, mut is_depleted) = (None, None);
    let (draws, weights) = match config.sampler {
        SamplerKind::Smc => {
            let move_config = config.move_config(&prep.design)?;
            let pql = prep.pql.clone().with_partition(&move_config.partition).map_err(|e| e.at("pql"))?;
            let mut sc = SmcConfig::new(config.smc.n_particles, config.smc.n_stages, move_config, seed);
            sc.resample_threshold = config.smc.resample_threshold;
            sc.workers = config.smc.workers;
            let (system, t) = run(model, &pql, &sc).map_err(|e| e.at("smc"))?;
            trace = Some(t);
            (system.draws(), Some(system.weights()))
        }
        SamplerKind::Importance => {
            let ws = importance_sampler(model, &prep.pql, config.is.n, SeedTree::new(seed))
                .map_err(|e| e.at("importance sampler"))?;
            is_ess = Some(ws.ess);
            is_depleted = Some(ws.depleted);
            (ws.draws(), Some(ws.weights()))
        }
        SamplerKind::Rwmh => {
            let move_config = config.move_config(&prep.design)?;
            let pql = prep.pql.clone().with_partition(&move_config.partition).map_err(|e| e.at("pql"))?;
            let mut rng = SeedTree::new(seed).stream(0, 0);
            let out = rwmh_chain(model, &pql, &move_config, config.mcmc.iters, config.mcmc.burnin, &mut rng)
                .map_err(|e| e.at("rwmh"))?;
            acceptance = out.acceptance.clone();
            (out.draws().clone(), None)
        }
        SamplerKind::Slice => {
            let mut rng = SeedTree::new(seed).stream(0, 0);
            let out = slice_sampler(
                model,
                &prep.pql,
                config.mcmc.iters,
                config.mcmc.burnin,
                config.slice.width,
                &mut rng,
            )
            .map_err(|e| e.at("slice"))?;
            (out.draws().clone(), None)
        }
    };
    let sampler_seconds = started.elapsed().as_secs_f64();
    let summaries = summarize(&draws, weights.as_deref()).map_err(|e| e.at("summary"))?;
    let mut names = prep.design.coef_names.clone();
    names.extend(prep.design.variance_names.iter().cloned());

    let p = prep.design.n_coef();
    let nu_mean = DVector::from_iterator(p, summaries.iter().take(p).map(|s| s.mean));
    let curves = prep
        .design
        .splines
        .iter()
        .map(|term| {
            let (lo, hi) = term.range;
            let grid: Vec<f64> = (0..CURVE_GRID)
                .map(|i| lo + (hi - lo) * i as f64 / (CURVE_GRID - 1) as f64)
                .collect();
            Ok(CurveOutput {
                predictor: term.predictor.clone(),
                f_hat: curve_estimate(&prep.design, term, &nu_mean, &grid)?,
                mean_response: mean_response_curve(&prep.design, model.family(), term, &nu_mean, &grid)?,
                grid,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at("curves"))?;

    Ok(FitOutput {
        sampler: config.sampler,
        names,
        draws,
        weights,
        summaries,
        curves,
        trace,
        acceptance,
        is_ess,
        is_depleted,
        sampler_seconds,
    })
}
