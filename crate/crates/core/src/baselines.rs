//! Comparison samplers targeting the same posterior: a plain importance
//! sampler from π₀, a random-walk Metropolis chain sharing the SMC move
//! kernel, and a one-coordinate-at-a-time slice sampler.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{log_pi, log_pi0, ModelSpec, ParamState, StateCache, Workspace};
use crate::numerics::SeedTree;
use crate::pql::{sample_pi0, PqlFit};
use crate::smc::{ess, gibbs_variances, normalise_log_weights, MoveConfig, MoveKernel};

/// ESS/N below which the importance sampler is flagged as depleted.
pub const IS_DEPLETION_RATIO: f64 = 0.01;

/// Default cap on stepping-out steps per side.
pub const SLICE_MAX_STEPS: usize = 100;

const SHRINK_CAP: usize = 1000;

#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub states: Vec<ParamState>,
    /// Normalised log-weights.
    pub log_weights: Vec<f64>,
    pub ess: f64,
    /// `ESS/N < 0.01`.
    pub depleted: bool,
}

impl WeightedSample {
    pub fn draws(&self) -> DMatrix<f64> {
        rows_to_matrix(self.states.iter().map(|s| s.to_row()).collect())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Importance sampling from π₀ with weights `π/π₀`.
pub fn importance_sampler(model: &ModelSpec, pql: &PqlFit, n: usize, seeds: SeedTree) -> Result<WeightedSample> {
    importance_sampler_for(model, pql, n, seeds, |s| log_pi(model, s))
}

/// Importance sampling from π₀ towards an arbitrary unnormalised log target.
pub fn importance_sampler_for<F>(
    model: &ModelSpec,
    pql: &PqlFit,
    n: usize,
    seeds: SeedTree,
    log_target: F,
) -> Result<WeightedSample>
where
    F: Fn(&ParamState) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::invalid("importance sampler needs at least one draw"));
    }
    let mut states = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for i in 0..n {
        let s = sample_pi0(pql, model, &mut seeds.stream(0, i as u64))?;
        let lw = log_target(&s)? - log_pi0(model, pql, &s)?;
        if lw.is_nan() {
            return Err(Error::Numeric(format!("importance weight {i} is NaN")));
        }
        log_weights.push(lw);
        states.push(s);
    }
    normalise_log_weights(&mut log_weights)?;
    let e = ess(&log_weights)?;
    let depleted = e / (n as f64) < IS_DEPLETION_RATIO;
    if depleted {
        eprintln!("warning: importance sampler ESS/N = {:.4} (particle depletion)", e / n as f64);
    }
    Ok(WeightedSample {
        states,
        log_weights,
        ess: e,
        depleted,
    })
}

/// Post-burn-in output of an MCMC baseline.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    draws: DMatrix<f64>,
    /// Per-block acceptance rates (Metropolis chains only).
    pub acceptance: Option<Vec<f64>>,
    pub burnin: usize,
    pub iters: usize,
    pub elapsed_seconds: f64,
}

impl ChainOutput {
    /// `(iters − burnin) × (P + L)` rows of `[ν, σ²]`.
    pub fn draws(&self) -> &DMatrix<f64> {
        &self.draws
    }
}

fn initial_state(pql: &PqlFit) -> ParamState {
    ParamState::new(pql.nu_hat().clone(), pql.sigma_sq_hat().to_vec())
}

fn check_lengths(iters: usize, burnin: usize) -> Result<()> {
    if iters <= burnin {
        return Err(Error::invalid(format!(
            "iterations ({iters}) must exceed burn-in ({burnin})"
        )));
    }
    Ok(())
}

/// Random-walk Metropolis chain using the SMC move kernel at γ = 1, started at
/// the PQL estimates.
pub fn rwmh_chain<R: Rng + ?Sized>(
    model: &ModelSpec,
    pql: &PqlFit,
    move_config: &MoveConfig,
    iters: usize,
    burnin: usize,
    rng: &mut R,
) -> Result<ChainOutput> {
    check_lengths(iters, burnin)?;
    let started = std::time::Instant::now();
    let kernel = MoveKernel::new(model, pql, move_config)?;
    let mut state = initial_state(pql);
    let mut ws = Workspace::new(model);
    let mut accepted = vec![0u32; kernel.n_blocks()];
    let mut rows = Vec::with_capacity(iters - burnin);
    for it in 0..iters {
        kernel.sweep(&mut state, 1.0, rng, &mut ws, &mut accepted)?;
        if it >= burnin {
            rows.push(state.to_row());
        }
    }
    Ok(ChainOutput {
        draws: rows_to_matrix(rows),
        acceptance: Some(accepted.iter().map(|&a| a as f64 / iters as f64).collect()),
        burnin,
        iters,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One stepping-out and shrinkage slice update of a univariate log density.
///
/// `log_f` is evaluated relative to any constant; the level is
/// `log_f(x0) − E` with `E ~ Exp(1)`. Returns `Err(steps)` when stepping out
/// fails to leave the slice within `max_steps` on either side.
pub fn slice_step<R, F>(x0: f64, mut log_f: F, width: f64, max_steps: usize, rng: &mut R) -> Result<f64, usize>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let f0 = log_f(x0);
    let e: f64 = Exp1.sample(rng);
    let level = f0 - e;
    let mut left = x0 - width * rng.random::<f64>();
    let mut right = left + width;
    let mut steps = 0;
    while log_f(left) > level {
        steps += 1;
        if steps > max_steps {
            return Err(max_steps);
        }
        left -= width;
    }
    steps = 0;
    while log_f(right) > level {
        steps += 1;
        if steps > max_steps {
            return Err(max_steps);
        }
        right += width;
    }
    for _ in 0..SHRINK_CAP {
        let x1 = left + (right - left) * rng.random::<f64>();
        if log_f(x1) > level {
            return Ok(x1);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
    Ok(x0)
}

/// Single-variable slice sampler on log π, cycling through ν in order, with
/// the same Gibbs update for σ² as the SMC kernel. Started at the PQL estimates.
pub fn slice_sampler<R: Rng + ?Sized>(
    model: &ModelSpec,
    pql: &PqlFit,
    iters: usize,
    burnin: usize,
    width: f64,
    rng: &mut R,
) -> Result<ChainOutput> {
    check_lengths(iters, burnin)?;
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::invalid("slice width must be positive"));
    }
    let started = std::time::Instant::now();
    let mut state = initial_state(pql);
    let mut ws = Workspace::new(model);
    let mut rows = Vec::with_capacity(iters - burnin);
    for it in 0..iters {
        let mut cache = StateCache::new(model, None, &state);
        for k in 0..model.n_coef() {
            let block = [k];
            let x0 = state.nu[k];
            let draw = slice_step(
                x0,
                |x| {
                    let d = cache.delta(model, None, &state, &block, &[x], &mut ws).log_pi;
                    if d.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        d
                    }
                },
                width,
                SLICE_MAX_STEPS,
                rng,
            )
            .map_err(|steps| Error::Bracket { coord: k, steps })?;
            cache.delta(model, None, &state, &block, &[draw], &mut ws);
            cache.commit(model, None, &mut state, &block, &[draw], &ws);
        }
        gibbs_variances(model, &mut state, rng)?;
        if it >= burnin {
            rows.push(state.to_row());
        }
    }
    Ok(ChainOutput {
        draws: rows_to_matrix(rows),
        acceptance: None,
        burnin,
        iters,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;
    use crate::pql::{pql_fit, PqlOptions};
    use nalgebra::DVector;

    fn small_model() -> ModelSpec {
        let n = 40;
        let c = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 / n as f64) - 0.5 });
        let y = DVector::from_fn(n, |i, _| ((i * 5) % 4) as f64);
        ModelSpec::new(y, c, 2, &[], 1e8, vec![], Family::Poisson).unwrap()
    }

    #[test]
    fn slice_step_standard_normal() {
        let mut rng = SeedTree::new(21).stream(0, 0);
        let n = 100_000;
        let mut x = 0.0;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let level_check = |v: f64| -0.5 * v * v;
            x = slice_step(x, level_check, 1.0, SLICE_MAX_STEPS, &mut rng).unwrap();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn slice_draw_is_on_the_slice() {
        let mut rng = SeedTree::new(2).stream(0, 0);
        for i in 0..2000 {
            let x0 = (i as f64 * 0.37).sin() * 3.0;
            let f = |v: f64| -v.abs().powf(1.5);
            // reproduce the level with a cloned stream
            let mut probe = rng.clone();
            let level = f(x0) - Distribution::<f64>::sample(&Exp1, &mut probe);
            let x1 = slice_step(x0, f, 0.7, SLICE_MAX_STEPS, &mut rng).unwrap();
            assert!(f(x1) > level);
        }
    }

    #[test]
    fn slice_step_reports_bracket_failure() {
        let mut rng = SeedTree::new(2).stream(0, 0);
        assert_eq!(slice_step(0.0, |_| 0.0, 1.0, 5, &mut rng), Err(5));
    }

    #[test]
    fn importance_sampler_self_target_has_equal_weights() {
        let m = small_model();
        let pql = pql_fit(&m, &PqlOptions::default()).unwrap();
        let out = importance_sampler_for(&m, &pql, 200, SeedTree::new(4), |s| log_pi0(&m, &pql, s)).unwrap();
        let w0 = out.log_weights[0];
        assert!(out.log_weights.iter().all(|w| (w - w0).abs() < 1e-9));
        assert!((out.ess - 200.0).abs() < 1e-6);
        let real = importance_sampler(&m, &pql, 200, SeedTree::new(4)).unwrap();
        assert!(real.ess <= 200.0 + 1e-9);
    }

    #[test]
    fn chains_validate_lengths() {
        let m = small_model();
        let pql = pql_fit(&m, &PqlOptions::default()).unwrap();
        let mut rng = SeedTree::new(1).stream(0, 0);
        let mc = MoveConfig::singleton(2, 1.0).unwrap();
        assert!(rwmh_chain(&m, &pql, &mc, 10, 10, &mut rng).is_err());
        assert!(slice_sampler(&m, &pql, 10, 10, 1.0, &mut rng).is_err());
        assert!(slice_sampler(&m, &pql, 10, 0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn tiny_tau_freezes_nu() {
        let m = small_model();
        let pql = pql_fit(&m, &PqlOptions::default()).unwrap();
        let mut rng = SeedTree::new(1).stream(0, 0);
        let mc = MoveConfig::singleton(2, 1e-40).unwrap();
        let out = rwmh_chain(&m, &pql, &mc, 50, 0, &mut rng).unwrap();
        for row in out.draws().row_iter() {
            for k in 0..2 {
                assert!((row[k] - pql.nu_hat()[k]).abs() < 1e-15);
            }
        }
        let acc = out.acceptance.unwrap();
        assert!(acc.iter().all(|&a| a == 1.0));
    }
}
