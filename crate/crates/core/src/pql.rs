//! Penalised quasi-likelihood initial fit and the Gaussian initial distribution
//! built from it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{weighted_gram, ModelSpec, ParamState};
use crate::numerics::{
    cholesky, conditional_cov_from_precision, sample_inverse_gamma, sample_mvn, CholeskyFactor,
    DEFAULT_JITTER_MAX,
};

/// Lower bound applied to every variance-component estimate.
pub const SIGMA_SQ_FLOOR: f64 = 1e-6;

/// Linear predictors are clamped to this range inside `b'` and `b''` during IRLS.
pub const ETA_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PqlOptions {
    pub max_outer: usize,
    pub tol: f64,
    /// Multiplier applied to the initial covariance.
    pub inflate: f64,
}

impl Default for PqlOptions {
    fn default() -> Self {
        Self {
            max_outer: 50,
            tol: 1e-6,
            inflate: 1.0,
        }
    }
}

/// Proposal covariance for one coefficient block.
#[derive(Debug, Clone)]
pub struct BlockCov {
    pub cov: DMatrix<f64>,
    pub chol: CholeskyFactor,
}

#[derive(Debug, Clone)]
pub struct PqlFit {
    nu_hat: DVector<f64>,
    sigma_sq_hat: Vec<f64>,
    sigma: DMatrix<f64>,
    sigma_chol: CholeskyFactor,
    precision: DMatrix<f64>,
    block_cond_covs: BTreeMap<Vec<usize>, BlockCov>,
    converged: bool,
    iterations: usize,
}

impl PqlFit {
    /// Builds the initial distribution around externally supplied estimates.
    pub fn from_estimates(
        model: &ModelSpec,
        nu_hat: DVector<f64>,
        sigma_sq_hat: Vec<f64>,
        inflate: f64,
    ) -> Result<Self> {
        if nu_hat.len() != model.n_coef() || sigma_sq_hat.len() != model.n_blocks() {
            return Err(Error::dim(format!(
                "estimates have {} coefficients and {} variances; model needs {} and {}",
                nu_hat.len(),
                sigma_sq_hat.len(),
                model.n_coef(),
                model.n_blocks()
            )));
        }
        if !(inflate > 0.0 && inflate.is_finite()) {
            return Err(Error::invalid("pql.inflate must be positive"));
        }
        let sigma_sq_hat: Vec<f64> = sigma_sq_hat.iter().map(|&s| s.max(SIGMA_SQ_FLOOR)).collect();
        let v_hat = model.prior_variances(&sigma_sq_hat);
        let h = weighted_gram(model, &nu_hat, &v_hat, None)?;
        let mut sigma = cholesky(&h, DEFAULT_JITTER_MAX)?.inverse()? * inflate;
        crate::numerics::symmetrize(&mut sigma);
        let sigma_chol = cholesky(&sigma, DEFAULT_JITTER_MAX)?;
        // Precision of the distribution actually sampled from, so that log π₀
        // and the sampler agree even when jitter was needed.
        let precision = sigma_chol.inverse()?;
        Ok(Self {
            nu_hat,
            sigma_sq_hat,
            sigma,
            sigma_chol,
            precision,
            block_cond_covs: BTreeMap::new(),
            converged: true,
            iterations: 0,
        })
    }

    pub fn nu_hat(&self) -> &DVector<f64> {
        &self.nu_hat
    }

    pub fn sigma_sq_hat(&self) -> &[f64] {
        &self.sigma_sq_hat
    }

    /// Covariance Σ of the Gaussian part of π₀.
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_chol(&self) -> &CholeskyFactor {
        &self.sigma_chol
    }

    /// `Σ⁻¹`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Precomputes conditional covariances for every set of a partition.
    pub fn with_partition(mut self, partition: &[Vec<usize>]) -> Result<Self> {
        for block in partition {
            if !self.block_cond_covs.contains_key(block) {
                let bc = self.compute_block_cov(block)?;
                self.block_cond_covs.insert(block.clone(), bc);
            }
        }
        Ok(self)
    }

    pub fn cached_blocks(&self) -> impl Iterator<Item = (&Vec<usize>, &BlockCov)> {
        self.block_cond_covs.iter()
    }

    /// Conditional covariance of `ν_block` given the rest under π₀.
    pub fn block_cov(&self, block: &[usize]) -> Result<BlockCov> {
        match self.block_cond_covs.get(block) {
            Some(bc) => Ok(bc.clone()),
            None => self.compute_block_cov(block),
        }
    }

    fn compute_block_cov(&self, block: &[usize]) -> Result<BlockCov> {
        let cov = conditional_cov_from_precision(&self.precision, block)?;
        let chol = cholesky(&cov, DEFAULT_JITTER_MAX)?;
        Ok(BlockCov { cov, chol })
    }
}

/// Index of the first all-ones fixed-effect column, if any.
fn intercept_column(model: &ModelSpec) -> Option<usize> {
    (0..model.q_beta()).find(|&k| model.design().column(k).iter().all(|&v| v == 1.0))
}

fn initial_nu(model: &ModelSpec) -> DVector<f64> {
    let mut nu = DVector::zeros(model.n_coef());
    if let Some(k) = intercept_column(model) {
        let n = model.n_obs() as f64;
        let ybar = model.y().mean();
        let ybar = match model.family() {
            crate::model::Family::Poisson => ybar.max(1.0 / (n + 1.0)),
            crate::model::Family::BernoulliLogit => ybar.clamp(1.0 / (n + 1.0), n / (n + 1.0)),
        };
        nu[k] = model.family().link(ybar);
    }
    nu
}

fn max_rel_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&o, &n)| (n - o).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Penalised quasi-likelihood fit: IRLS on the working response with an
/// EM-style update for the variance components, followed by the Gaussian
/// covariance `[Cᵀ diag{b''(Cν̂)} C + V̂⁻¹]⁻¹`.
pub fn pql_fit(model: &ModelSpec, opts: &PqlOptions) -> Result<PqlFit> {
    if opts.max_outer == 0 {
        return Err(Error::invalid("pql.max_outer must be at least 1"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("pql.tol must be positive"));
    }
    let family = model.family();
    let c = model.design();
    let y = model.y();
    let mut nu = initial_nu(model);
    let mut sigma_sq = vec![1.0; model.n_blocks()];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_outer {
        iterations = it;
        let eta = model.linear_predictor(&nu);
        let mut w = DVector::zeros(eta.len());
        let mut z = DVector::zeros(eta.len());
        for i in 0..eta.len() {
            let e = eta[i].clamp(-ETA_CLAMP, ETA_CLAMP);
            let wi = family.variance(e);
            w[i] = wi;
            z[i] = eta[i] + (y[i] - family.mean(e)) / wi;
        }
        let v = model.prior_variances(&sigma_sq);
        let h = weighted_gram(model, &nu, &v, Some(ETA_CLAMP))?;
        let rhs = c.transpose() * w.component_mul(&z);
        let chol = cholesky(&h, DEFAULT_JITTER_MAX).map_err(|e| e.at("pql"))?;
        let nu_new = chol.solve(&rhs)?;
        if nu_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("PQL produced non-finite coefficients".into()).at("pql"));
        }
        let sigma_new: Vec<f64> = if model.n_blocks() > 0 {
            let h_inv = chol.inverse()?;
            model
                .blocks()
                .iter()
                .map(|b| {
                    let u_sq = nu_new.rows(b.offset, b.width).norm_squared();
                    let tr: f64 = b.range().map(|k| h_inv[(k, k)]).sum();
                    ((u_sq + tr) / b.width as f64).max(SIGMA_SQ_FLOOR)
                })
                .collect()
        } else {
            Vec::new()
        };
        let change = max_rel_change(nu.as_slice(), nu_new.as_slice())
            .max(max_rel_change(&sigma_sq, &sigma_new));
        nu = nu_new;
        sigma_sq = sigma_new;
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let mut fit = PqlFit::from_estimates(model, nu, sigma_sq, opts.inflate)?;
    fit.converged = converged;
    fit.iterations = iterations;
    Ok(fit)
}

/// One draw from π₀: ν from the Gaussian, then each σ_ℓ² from its inverse-gamma conditional.
pub fn sample_pi0<R: Rng + ?Sized>(pql: &PqlFit, model: &ModelSpec, rng: &mut R) -> Result<ParamState> {
    let nu = sample_mvn(pql.nu_hat(), pql.sigma_chol(), rng)?;
    let u_sq = model.block_sq_norms(&nu);
    let mut sigma_sq = Vec::with_capacity(model.n_blocks());
    for (l, &n2) in u_sq.iter().enumerate() {
        let (shape, rate) = model.variance_conditional(l, n2);
        sigma_sq.push(sample_inverse_gamma(shape, rate, rng)?);
    }
    Ok(ParamState::new(nu, sigma_sq))
}

impl PqlFit {
    /// Replaces the Gaussian factor by a zero matrix, collapsing ν onto ν̂. Test hook.
    #[doc(hidden)]
    pub fn with_degenerate_sampler(mut self) -> Self {
        let p = self.nu_hat.len();
        self.sigma_chol = CholeskyFactor::from_lower(DMatrix::zeros(p, p)).expect("zero factor");
        self
    }
}
