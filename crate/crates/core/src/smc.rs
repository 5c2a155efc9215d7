//! Tempered sequential Monte Carlo sampler.
//!
//! Particles start from the PQL-based initial distribution π₀ and are carried
//! through the geometric bridge `π_s ∝ π₀^(1−γ_s) π^(γ_s)`. Each stage
//! reweights by `(π/π₀)^(γ_s − γ_{s−1})`, resamples (stratified) when the
//! effective sample size drops below `k·N` or on the first stage with
//! `γ_s = 1`, then moves every particle with a blocked random-walk Metropolis
//! sweep over ν followed by exact inverse-gamma Gibbs draws for σ².
//!
//! Randomness is addressed, not sequenced: particle `i` at stage `s` draws
//! from `SeedTree::stream(s, i)` and resampling at stage `s` from
//! `SeedTree::stream(s, SeedTree::GLOBAL)`. Results are therefore bitwise
//! identical for a given seed whatever the number of worker threads.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_pi, log_pi0, ModelSpec, ParamState, StateCache, Workspace};
use crate::numerics::{log_sum_exp, sample_inverse_gamma, CholeskyFactor, SeedTree};
use crate::pql::{sample_pi0, PqlFit};

/// Number of trailing `γ = 1` stages after the first one.
pub const TERMINAL_STAGES: usize = 5;

/// Tempering exponents `γ₀ … γ_S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    gammas: Vec<f64>,
}

/// Linear schedule `γ_s = min{1, s/(S − 5)}`, `s = 0 … S`.
pub fn make_schedule(n_stages: usize) -> Result<Schedule> {
    if n_stages < TERMINAL_STAGES + 1 {
        return Err(Error::invalid(format!(
            "need at least {} stages, got {n_stages}",
            TERMINAL_STAGES + 1
        )));
    }
    let ramp = (n_stages - TERMINAL_STAGES) as f64;
    let gammas = (0..=n_stages).map(|s| (s as f64 / ramp).min(1.0)).collect();
    Ok(Schedule { gammas })
}

impl Schedule {
    pub fn from_gammas(gammas: Vec<f64>) -> Result<Self> {
        if gammas.len() < 2 {
            return Err(Error::invalid("schedule needs at least two entries"));
        }
        if gammas[0] != 0.0 || *gammas.last().unwrap() != 1.0 {
            return Err(Error::invalid("schedule must start at 0 and end at 1"));
        }
        if gammas.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::invalid("schedule must be non-decreasing"));
        }
        Ok(Self { gammas })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// `S`.
    pub fn n_stages(&self) -> usize {
        self.gammas.len() - 1
    }

    /// `min{s : γ_s = 1}`.
    pub fn first_unit_stage(&self) -> usize {
        self.gammas.iter().position(|&g| g == 1.0).expect("schedule ends at 1")
    }
}

/// Partition of the coefficients into update blocks with proposal scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveConfig {
    pub partition: Vec<Vec<usize>>,
    /// Multiplier on each block's conditional covariance.
    pub tau: Vec<f64>,
}

impl MoveConfig {
    /// Validates and builds a configuration.
    pub fn new(partition: Vec<Vec<usize>>, tau: Vec<f64>, n_coef: usize) -> Result<Self> {
        if partition.len() != tau.len() {
            return Err(Error::invalid(format!(
                "{} blocks but {} tau values",
                partition.len(),
                tau.len()
            )));
        }
        if tau.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("all tau values must be positive"));
        }
        let mut seen = vec![false; n_coef];
        for block in &partition {
            if block.is_empty() {
                return Err(Error::invalid("update blocks must be non-empty"));
            }
            for &k in block {
                if k >= n_coef {
                    return Err(Error::invalid(format!("coefficient {k} out of range ({n_coef})")));
                }
                if seen[k] {
                    return Err(Error::invalid(format!("coefficient {k} appears in two blocks")));
                }
                seen[k] = true;
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("coefficient {k} is not in any block")));
        }
        Ok(Self { partition, tau })
    }

    /// Default scaling `τ_j = 2.4/√|I_j|`.
    pub fn default_tau(partition: &[Vec<usize>]) -> Vec<f64> {
        partition.iter().map(|b| 2.4 / (b.len() as f64).sqrt()).collect()
    }

    pub fn with_default_tau(partition: Vec<Vec<usize>>, n_coef: usize) -> Result<Self> {
        let tau = Self::default_tau(&partition);
        Self::new(partition, tau, n_coef)
    }

    /// One block per coefficient, common scale `tau`.
    pub fn singleton(n_coef: usize, tau: f64) -> Result<Self> {
        Self::new((0..n_coef).map(|k| vec![k]).collect(), vec![tau; n_coef], n_coef)
    }

    /// All coefficients in one block.
    pub fn single_block(n_coef: usize, tau: f64) -> Result<Self> {
        Self::new(vec![(0..n_coef).collect()], vec![tau], n_coef)
    }

    pub fn n_blocks(&self) -> usize {
        self.partition.len()
    }
}

#[derive(Debug, Clone)]
struct KernelBlock {
    indices: Vec<usize>,
    factor: CholeskyFactor,
}

/// π_s-invariant transition: a fixed-order sweep of blocked random-walk
/// Metropolis updates on ν, then Gibbs draws of every σ_ℓ².
#[derive(Debug, Clone)]
pub struct MoveKernel<'a> {
    model: &'a ModelSpec,
    pql: &'a PqlFit,
    blocks: Vec<KernelBlock>,
}

impl<'a> MoveKernel<'a> {
    pub fn new(model: &'a ModelSpec, pql: &'a PqlFit, config: &MoveConfig) -> Result<Self> {
        if config.partition.iter().flatten().any(|&k| k >= model.n_coef()) {
            return Err(Error::invalid("move partition does not match the model"));
        }
        let blocks = config
            .partition
            .iter()
            .zip(&config.tau)
            .map(|(idx, &tau)| {
                let bc = pql.block_cov(idx)?;
                Ok(KernelBlock {
                    indices: idx.clone(),
                    factor: bc.chol.scaled(tau.sqrt()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, pql, blocks })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    /// One sweep at tempering level `gamma`; `accepted[j]` is incremented for
    /// every accepted block proposal.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut ParamState,
        gamma: f64,
        rng: &mut R,
        ws: &mut Workspace,
        accepted: &mut [u32],
    ) -> Result<()> {
        let model = self.model;
        let pql = (gamma < 1.0).then_some(self.pql);
        let mut cache = StateCache::new(model, pql, state);
        let mut proposal = Vec::new();
        for (j, block) in self.blocks.iter().enumerate() {
            let d = block.indices.len();
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let step = block.factor.lower() * z;
            proposal.clear();
            proposal.extend(block.indices.iter().zip(step.iter()).map(|(&k, s)| state.nu[k] + s));
            let delta = cache.delta(model, pql, state, &block.indices, &proposal, ws);
            let log_alpha = delta.tempered(gamma);
            if log_alpha.is_nan() {
                return Err(Error::Numeric(format!(
                    "acceptance ratio is NaN for block {j} at gamma {gamma}"
                )));
            }
            let u: f64 = rng.random();
            if log_alpha >= 0.0 || u.ln() < log_alpha {
                cache.commit(model, pql, state, &block.indices, &proposal, ws);
                accepted[j] += 1;
            }
        }
        gibbs_variances(model, state, rng)
    }
}

/// Draws every `σ_ℓ² ~ IG(A_ℓ + q_ℓ/2, A_ℓ + ‖u_ℓ‖²/2)`; this conditional is the
/// same at every tempering level.
pub fn gibbs_variances<R: Rng + ?Sized>(model: &ModelSpec, state: &mut ParamState, rng: &mut R) -> Result<()> {
    for (l, n2) in model.block_sq_norms(&state.nu).into_iter().enumerate() {
        let (shape, rate) = model.variance_conditional(l, n2);
        state.sigma_sq[l] = sample_inverse_gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// Normalises log-weights in place so that `Σ exp(w) = 1`.
pub fn normalise_log_weights(log_weights: &mut [f64]) -> Result<()> {
    let total = log_sum_exp(log_weights)?;
    if total == f64::NEG_INFINITY {
        return Err(Error::Degenerate("every particle has zero weight".into()));
    }
    if !total.is_finite() {
        return Err(Error::Numeric("log-weight total is not finite".into()));
    }
    for w in log_weights.iter_mut() {
        *w -= total;
    }
    Ok(())
}

/// `log w_i += Δγ · log_ratio_i`, then normalise.
pub fn reweight_log(log_weights: &mut [f64], log_ratios: &[f64], delta_gamma: f64) -> Result<()> {
    if !(delta_gamma >= 0.0) {
        return Err(Error::invalid(format!("delta_gamma must be non-negative, got {delta_gamma}")));
    }
    if log_weights.len() != log_ratios.len() {
        return Err(Error::dim("one log ratio per particle"));
    }
    if delta_gamma > 0.0 {
        for (w, &r) in log_weights.iter_mut().zip(log_ratios) {
            if r.is_nan() {
                return Err(Error::Numeric("log density ratio is NaN".into()));
            }
            *w += delta_gamma * r;
        }
    }
    normalise_log_weights(log_weights)
}

/// Effective sample size `(Σw)²/Σw²`, from log-weights.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let total = log_sum_exp(log_weights)?;
    if total == f64::NEG_INFINITY {
        return Err(Error::Degenerate("ESS of all-zero weights".into()));
    }
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    let sq = log_sum_exp(&doubled)?;
    let n = log_weights.len() as f64;
    Ok((2.0 * total - sq).exp().clamp(1.0, n))
}

/// Stratified resampling: stratum `i` contributes the point
/// `u_i = (i + U)/N ∈ [i/N, (i+1)/N)`, each inverted through the weight CDF.
/// A single uniform offset `U` is shared by all strata, so every ancestor
/// count is within one of `N·w_i`. Output is sorted.
pub fn stratified_resample<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let n = log_weights.len();
    if n == 0 {
        return Err(Error::invalid("cannot resample zero particles"));
    }
    let total = log_sum_exp(log_weights)?;
    if !total.is_finite() {
        return Err(Error::Degenerate("cannot resample degenerate weights".into()));
    }
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - total).exp()).collect();
    let offset: f64 = rng.random();
    let mut ancestors = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = (i as f64 + offset) / n as f64;
        while u >= cumulative && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        ancestors.push(j);
    }
    Ok(ancestors)
}

/// N weighted particles with their random-stream tree.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    pub states: Vec<ParamState>,
    pub log_weights: Vec<f64>,
    pub seeds: SeedTree,
    pub stage: usize,
}

impl ParticleSystem {
    /// Draws N particles from π₀ with uniform weights.
    pub fn initialise(model: &ModelSpec, pql: &PqlFit, n: usize, seeds: SeedTree) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("need at least 2 particles"));
        }
        let states = (0..n)
            .into_par_iter()
            .map(|i| sample_pi0(pql, model, &mut seeds.stream(0, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            states,
            log_weights: vec![-(n as f64).ln(); n],
            seeds,
            stage: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn ess(&self) -> Result<f64> {
        ess(&self.log_weights)
    }

    /// Normalised weights in probability space.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `N × (P + L)` matrix of `[ν, σ²]` rows.
    pub fn draws(&self) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = self.states.iter().map(|s| s.to_row()).collect();
        let cols = rows.first().map_or(0, |r| r.len());
        DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
    }

    fn resample_with(&mut self, ancestors: &[usize]) {
        self.states = ancestors.iter().map(|&a| self.states[a].clone()).collect();
        let n = self.states.len();
        self.log_weights = vec![-(n as f64).ln(); n];
    }
}

/// `log π(θ_i) − log π₀(θ_i)` for every particle.
pub fn log_ratios(model: &ModelSpec, pql: &PqlFit, states: &[ParamState]) -> Result<Vec<f64>> {
    states
        .par_iter()
        .map(|s| Ok(log_pi(model, s)? - log_pi0(model, pql, s)?))
        .collect()
}

/// Reweights the system towards the next tempered target.
pub fn reweight(system: &mut ParticleSystem, delta_gamma: f64, model: &ModelSpec, pql: &PqlFit) -> Result<()> {
    if delta_gamma == 0.0 {
        return normalise_log_weights(&mut system.log_weights);
    }
    let ratios = log_ratios(model, pql, &system.states)?;
    reweight_log(&mut system.log_weights, &ratios, delta_gamma)
}

/// Moves every particle with one kernel sweep at `gamma`. Returns the
/// per-block acceptance rates. Weights are untouched.
pub fn move_step(system: &mut ParticleSystem, gamma: f64, kernel: &MoveKernel<'_>) -> Result<Vec<f64>> {
    let seeds = system.seeds;
    let stage = system.stage as u64;
    let j = kernel.n_blocks();
    let model = kernel.model();
    let counts = system
        .states
        .par_iter_mut()
        .enumerate()
        .map_init(
            || Workspace::new(model),
            |ws, (i, state)| {
                let mut rng = seeds.stream(stage, i as u64);
                let mut accepted = vec![0u32; j];
                kernel.sweep(state, gamma, &mut rng, ws, &mut accepted)?;
                Ok(accepted)
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let n = system.states.len() as f64;
    let mut rates = vec![0.0; j];
    for c in &counts {
        for (r, &a) in rates.iter_mut().zip(c) {
            *r += a as f64;
        }
    }
    Ok(rates.into_iter().map(|r| r / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub n_stages: usize,
    /// Resample when `ESS < k·N`.
    pub resample_threshold: f64,
    pub move_config: MoveConfig,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Resample on the first stage with `γ = 1` (disable only in tests).
    #[serde(default = "yes")]
    pub forced_resample: bool,
    /// Apply the move kernel (disable only in tests).
    #[serde(default = "yes")]
    pub moves: bool,
}

fn yes() -> bool {
    true
}

impl SmcConfig {
    pub fn new(n_particles: usize, n_stages: usize, move_config: MoveConfig, seed: u64) -> Self {
        Self {
            n_particles,
            n_stages,
            resample_threshold: 0.5,
            move_config,
            seed,
            workers: None,
            forced_resample: true,
            moves: true,
        }
    }
}

/// Per-stage record of a run. Index `s − 1` holds stage `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub gammas: Vec<f64>,
    /// ESS after reweighting, before any resampling.
    pub ess: Vec<f64>,
    pub resample_stages: Vec<usize>,
    /// `acceptance[j][s − 1]`: acceptance rate of block `j` at stage `s`.
    pub acceptance: Vec<Vec<f64>>,
    pub n_particles: usize,
    pub elapsed_seconds: f64,
}

/// Runs the sampler to γ = 1 and returns the final particles with the trace.
pub fn run(model: &ModelSpec, pql: &PqlFit, config: &SmcConfig) -> Result<(ParticleSystem, RunTrace)> {
    match config.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(model, pql, config))
        }
        None => run_inner(model, pql, config),
    }
}

fn run_inner(model: &ModelSpec, pql: &PqlFit, config: &SmcConfig) -> Result<(ParticleSystem, RunTrace)> {
    let started = Instant::now();
    if !(0.0..=1.0).contains(&config.resample_threshold) {
        return Err(Error::invalid("resample threshold must lie in [0, 1]"));
    }
    let schedule = make_schedule(config.n_stages)?;
    let kernel = MoveKernel::new(model, pql, &config.move_config)?;
    let seeds = SeedTree::new(config.seed);
    let mut system = ParticleSystem::initialise(model, pql, config.n_particles, seeds)?;
    let n = config.n_particles as f64;
    let gammas = schedule.gammas();
    let forced_at = schedule.first_unit_stage();
    let mut trace = RunTrace {
        gammas: gammas.to_vec(),
        ess: Vec::with_capacity(config.n_stages),
        resample_stages: Vec::new(),
        acceptance: vec![Vec::with_capacity(config.n_stages); kernel.n_blocks()],
        n_particles: config.n_particles,
        elapsed_seconds: 0.0,
    };

    for s in 1..=schedule.n_stages() {
        system.stage = s;
        reweight(&mut system, gammas[s] - gammas[s - 1], model, pql).map_err(|e| e.at("reweight"))?;
        let e = system.ess()?;
        trace.ess.push(e);
        if e < config.resample_threshold * n || (config.forced_resample && s == forced_at) {
            let mut rng = seeds.stream(s as u64, SeedTree::GLOBAL);
            let ancestors = stratified_resample(&system.log_weights, &mut rng)?;
            system.resample_with(&ancestors);
            trace.resample_stages.push(s);
        }
        if config.moves {
            let rates = move_step(&mut system, gammas[s], &kernel).map_err(|e| e.at("move"))?;
            for (row, r) in trace.acceptance.iter_mut().zip(rates) {
                row.push(r);
            }
        } else {
            for row in trace.acceptance.iter_mut() {
                row.push(0.0);
            }
        }
    }
    trace.elapsed_seconds = started.elapsed().as_secs_f64();
    Ok((system, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_shapes() {
        let s = make_schedule(105).unwrap();
        let g = s.gammas();
        assert_eq!(g.len(), 106);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 1.0);
        assert_eq!(g[105], 1.0);
        assert_relative_eq!(g[50], 0.5, epsilon = 1e-15);
        assert_eq!(s.first_unit_stage(), 100);
        assert_eq!(make_schedule(6).unwrap().gammas(), &[0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(make_schedule(5).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::from_gammas(vec![0.0, 0.7, 0.5, 1.0]).is_err());
        assert!(Schedule::from_gammas(vec![0.1, 1.0]).is_err());
        assert!(Schedule::from_gammas(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn ess_closed_forms() {
        let n = 7;
        assert_relative_eq!(ess(&vec![-3.0; n]).unwrap(), n as f64, epsilon = 1e-12);
        let mut point = vec![f64::NEG_INFINITY; 5];
        point[2] = -1.0;
        assert_relative_eq!(ess(&point).unwrap(), 1.0, epsilon = 1e-12);
        let w = [2f64.ln(), 0.0, 0.0];
        assert_relative_eq!(ess(&w).unwrap(), 16.0 / 6.0, epsilon = 1e-12);
        assert!(ess(&[f64::NEG_INFINITY; 3]).is_err());
    }

    #[test]
    fn reweight_two_particles() {
        let mut lw = vec![0.5f64.ln(); 2];
        reweight_log(&mut lw, &[0.0, 3f64.ln()], 1.0).unwrap();
        assert_relative_eq!(lw[0].exp(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(lw[1].exp(), 0.75, epsilon = 1e-15);

        let before = lw.clone();
        reweight_log(&mut lw, &[5.0, -2.0], 0.0).unwrap();
        for (a, b) in lw.iter().zip(&before) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let mut dead = vec![0.0, 0.0];
        assert!(matches!(
            reweight_log(&mut dead, &[f64::NEG_INFINITY, f64::NEG_INFINITY], 1.0),
            Err(Error::Degenerate(_))
        ));
        assert!(reweight_log(&mut dead, &[0.0, 0.0], -0.1).is_err());
    }

    #[test]
    fn resample_special_cases() {
        let mut rng = SeedTree::new(3).stream(0, 0);
        let eq = vec![0.0; 6];
        assert_eq!(stratified_resample(&eq, &mut rng).unwrap(), (0..6).collect::<Vec<_>>());
        let mut point = vec![f64::NEG_INFINITY; 6];
        point[0] = 0.0;
        assert_eq!(stratified_resample(&point, &mut rng).unwrap(), vec![0; 6]);
        for _ in 0..100 {
            let a = stratified_resample(&[0.5f64.ln(), 0.5f64.ln()], &mut rng).unwrap();
            assert_eq!(a, vec![0, 1]);
        }
        assert!(stratified_resample(&[f64::NEG_INFINITY; 2], &mut rng).is_err());
    }

    #[test]
    fn move_config_validation() {
        assert!(MoveConfig::new(vec![vec![0], vec![0]], vec![1.0, 1.0], 2).is_err());
        assert!(MoveConfig::new(vec![vec![0]], vec![1.0], 2).is_err());
        assert!(MoveConfig::new(vec![vec![0, 1]], vec![0.0], 2).is_err());
        assert!(MoveConfig::new(vec![vec![0, 2]], vec![1.0], 2).is_err());
        let m = MoveConfig::with_default_tau(vec![vec![0], vec![1, 2, 3, 4]], 5).unwrap();
        assert_relative_eq!(m.tau[0], 2.4);
        assert_relative_eq!(m.tau[1], 1.2);
    }
}
