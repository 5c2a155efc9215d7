//! The GLMM probability model in log space.
//!
//! The unnormalised log posterior is
//!
//! ```text
//! log π(ν, σ²) = yᵀCν − 1ᵀb(Cν) − ‖β‖²/(2σ_β²)
//!              − Σ_ℓ [(A_ℓ + q_ℓ/2 + 1) log σ_ℓ² + (A_ℓ + ‖u_ℓ‖²/2)/σ_ℓ²]
//! ```
//!
//! and the initial distribution is the Gaussian PQL approximation for ν
//! combined with conditionally conjugate inverse-gamma draws for σ². The
//! tempered targets are the geometric bridge `γ log π + (1 − γ) log π₀`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pql::PqlFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Poisson,
    #[serde(alias = "logit", alias = "bernoulli", alias = "binomial")]
    BernoulliLogit,
}

impl Family {
    /// Cumulant `b(x)`.
    pub fn b(self, x: f64) -> f64 {
        match self {
            Family::Poisson => x.exp(),
            Family::BernoulliLogit => {
                if x <= 0.0 {
                    x.exp().ln_1p()
                } else {
                    x + (-x).exp().ln_1p()
                }
            }
        }
    }

    /// Mean function `b'(x)`.
    pub fn mean(self, x: f64) -> f64 {
        match self {
            Family::Poisson => x.exp(),
            Family::BernoulliLogit => logistic(x),
        }
    }

    /// Variance function `b''(x)`.
    pub fn variance(self, x: f64) -> f64 {
        match self {
            Family::Poisson => x.exp(),
            Family::BernoulliLogit => {
                let p = logistic(x);
                p * (1.0 - p)
            }
        }
    }

    /// Canonical link `(b')⁻¹(μ)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Poisson => mu.ln(),
            Family::BernoulliLogit => (mu / (1.0 - mu)).ln(),
        }
    }

    fn validate_response(self, y: &[f64]) -> Result<()> {
        for (i, &v) in y.iter().enumerate() {
            let ok = match self {
                Family::Poisson => v >= 0.0 && v.fract() == 0.0 && v.is_finite(),
                Family::BernoulliLogit => v == 0.0 || v == 1.0,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "response {i} = {v} is not valid for the {self:?} family"
                )));
            }
        }
        Ok(())
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `b`, `b'` or `b''` of the family cumulant.
pub fn cumulant(family: Family, x: f64, order: u8) -> f64 {
    match order {
        0 => family.b(x),
        1 => family.mean(x),
        2 => family.variance(x),
        _ => panic!("cumulant order must be 0, 1 or 2"),
    }
}

/// Column range of one random-effect block `u_ℓ` inside `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomBlock {
    pub offset: usize,
    pub width: usize,
}

impl RandomBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.width
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    y: DVector<f64>,
    c: DMatrix<f64>,
    columns: Vec<Vec<(usize, f64)>>,
    q_beta: usize,
    blocks: Vec<RandomBlock>,
    sigma_beta_sq: f64,
    a: Vec<f64>,
    family: Family,
    block_of: Vec<Option<usize>>,
}

impl ModelSpec {
    /// `block_widths` lists `q_ℓ`; blocks occupy consecutive columns after the
    /// `q_beta` fixed-effect columns.
    pub fn new(
        y: DVector<f64>,
        c: DMatrix<f64>,
        q_beta: usize,
        block_widths: &[usize],
        sigma_beta_sq: f64,
        a: Vec<f64>,
        family: Family,
    ) -> Result<Self> {
        let (n, p) = c.shape();
        if y.len() != n {
            return Err(Error::dim(format!("y has {} rows, C has {n}", y.len())));
        }
        if n == 0 {
            return Err(Error::invalid("model has no observations"));
        }
        if q_beta + block_widths.iter().sum::<usize>() != p {
            return Err(Error::dim(format!(
                "q_beta ({q_beta}) plus block widths {block_widths:?} does not equal {p} columns"
            )));
        }
        if block_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("random-effect blocks must be non-empty"));
        }
        if a.len() != block_widths.len() {
            return Err(Error::dim(format!(
                "{} hyperparameters A for {} blocks",
                a.len(),
                block_widths.len()
            )));
        }
        if a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("all A hyperparameters must be positive"));
        }
        if !(sigma_beta_sq > 0.0 && sigma_beta_sq.is_finite()) {
            return Err(Error::invalid("sigma_beta_sq must be positive"));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix has non-finite entries"));
        }
        family.validate_response(y.as_slice())?;

        let mut blocks = Vec::with_capacity(block_widths.len());
        let mut block_of = vec![None; p];
        let mut offset = q_beta;
        for (l, &width) in block_widths.iter().enumerate() {
            blocks.push(RandomBlock { offset, width });
            for slot in &mut block_of[offset..offset + width] {
                *slot = Some(l);
            }
            offset += width;
        }
        let columns = (0..p)
            .map(|k| {
                c.column(k)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        Ok(Self {
            y,
            c,
            columns,
            q_beta,
            blocks,
            sigma_beta_sq,
            a,
            family,
            block_of,
        })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn n_obs(&self) -> usize {
        self.c.nrows()
    }

    /// Number of regression coefficients `P`.
    pub fn n_coef(&self) -> usize {
        self.c.ncols()
    }

    pub fn q_beta(&self) -> usize {
        self.q_beta
    }

    pub fn blocks(&self) -> &[RandomBlock] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn sigma_beta_sq(&self) -> f64 {
        self.sigma_beta_sq
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Random-effect block owning coefficient `k`, if any.
    pub fn block_of(&self, k: usize) -> Option<usize> {
        self.block_of[k]
    }

    /// Non-zero entries `(row, value)` of column `k` of `C`.
    pub fn column_entries(&self, k: usize) -> &[(usize, f64)] {
        &self.columns[k]
    }

    pub fn linear_predictor(&self, nu: &DVector<f64>) -> DVector<f64> {
        let mut eta = DVector::zeros(self.n_obs());
        for (k, col) in self.columns.iter().enumerate() {
            let v = nu[k];
            if v != 0.0 {
                for &(i, c) in col {
                    eta[i] += c * v;
                }
            }
        }
        eta
    }

    /// `yᵀη − 1ᵀb(η)`.
    pub fn log_likelihood_eta(&self, eta: &DVector<f64>) -> f64 {
        self.y
            .iter()
            .zip(eta.iter())
            .map(|(&y, &e)| y * e - self.family.b(e))
            .sum()
    }

    /// Diagonal of `V`: `σ_β²` on fixed effects, `σ_ℓ²` on block ℓ.
    pub fn prior_variances(&self, sigma_sq: &[f64]) -> DVector<f64> {
        let mut v = DVector::from_element(self.n_coef(), self.sigma_beta_sq);
        for (block, &s) in self.blocks.iter().zip(sigma_sq) {
            for k in block.range() {
                v[k] = s;
            }
        }
        v
    }

    /// `‖u_ℓ‖²` for every block.
    pub fn block_sq_norms(&self, nu: &DVector<f64>) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| nu.rows(b.offset, b.width).norm_squared())
            .collect()
    }

    /// Inverse-gamma full conditional `(shape, rate)` of `σ_ℓ²` given `‖u_ℓ‖²`.
    pub fn variance_conditional(&self, l: usize, u_sq_norm: f64) -> (f64, f64) {
        let q = self.blocks[l].width as f64;
        (self.a[l] + 0.5 * q, self.a[l] + 0.5 * u_sq_norm)
    }

    pub fn check_state(&self, state: &ParamState) -> Result<()> {
        if state.nu.len() != self.n_coef() {
            return Err(Error::dim(format!(
                "state has {} coefficients, model has {}",
                state.nu.len(),
                self.n_coef()
            )));
        }
        if state.sigma_sq.len() != self.n_blocks() {
            return Err(Error::dim(format!(
                "state has {} variance components, model has {}",
                state.sigma_sq.len(),
                self.n_blocks()
            )));
        }
        if state.sigma_sq.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("variance components must be strictly positive"));
        }
        Ok(())
    }

    /// σ²-dependent terms shared by π and π₀:
    /// `−Σ_ℓ [(A_ℓ + q_ℓ/2 + 1) log σ_ℓ² + (A_ℓ + ‖u_ℓ‖²/2)/σ_ℓ²]`.
    fn variance_terms(&self, u_sq: &[f64], sigma_sq: &[f64]) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let a = self.a[l];
                let q = b.width as f64;
                -((a + 0.5 * q + 1.0) * sigma_sq[l].ln() + (a + 0.5 * u_sq[l]) / sigma_sq[l])
            })
            .sum()
    }

    /// `Σ_ℓ (A_ℓ + q_ℓ/2) log(A_ℓ + ‖u_ℓ‖²/2)`, the ν-dependent normaliser of π₀(σ² | ν).
    fn pi0_norm_terms(&self, u_sq: &[f64]) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(l, b)| {
                let a = self.a[l];
                (a + 0.5 * b.width as f64) * (a + 0.5 * u_sq[l]).ln()
            })
            .sum()
    }
}

/// One parameter state θ = (ν, σ²) with ν = [β; u].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub nu: DVector<f64>,
    pub sigma_sq: Vec<f64>,
}

impl ParamState {
    pub fn new(nu: DVector<f64>, sigma_sq: Vec<f64>) -> Self {
        Self { nu, sigma_sq }
    }

    /// `[ν..., σ²...]` as a flat row.
    pub fn to_row(&self) -> Vec<f64> {
        self.nu.iter().chain(self.sigma_sq.iter()).copied().collect()
    }
}

/// Unnormalised log posterior.
pub fn log_pi(model: &ModelSpec, state: &ParamState) -> Result<f64> {
    model.check_state(state)?;
    let eta = model.linear_predictor(&state.nu);
    let beta_sq = state.nu.rows(0, model.q_beta).norm_squared();
    let u_sq = model.block_sq_norms(&state.nu);
    Ok(model.log_likelihood_eta(&eta) - beta_sq / (2.0 * model.sigma_beta_sq)
        + model.variance_terms(&u_sq, &state.sigma_sq))
}

/// Unnormalised log initial density.
pub fn log_pi0(model: &ModelSpec, pql: &PqlFit, state: &ParamState) -> Result<f64> {
    model.check_state(state)?;
    let d = &state.nu - pql.nu_hat();
    let quad = d.dot(&(pql.precision() * &d));
    let u_sq = model.block_sq_norms(&state.nu);
    Ok(-0.5 * quad + model.pi0_norm_terms(&u_sq) + model.variance_terms(&u_sq, &state.sigma_sq))
}

/// Tempered log target `γ log π + (1 − γ) log π₀`.
pub fn log_pi_s(model: &ModelSpec, pql: &PqlFit, state: &ParamState, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")));
    }
    if gamma == 1.0 {
        return log_pi(model, state);
    }
    if gamma == 0.0 {
        return log_pi0(model, pql, state);
    }
    Ok(gamma * log_pi(model, state)? + (1.0 - gamma) * log_pi0(model, pql, state)?)
}

/// Negated Hessian of `log π` in ν: `Cᵀ diag{b''(Cν)} C + V⁻¹`.
pub fn neg_hessian_nu(model: &ModelSpec, nu: &DVector<f64>, v_diag: &DVector<f64>) -> Result<DMatrix<f64>> {
    weighted_gram(model, nu, v_diag, None)
}

/// `Cᵀ diag{b''(clamp(Cν))} C + V⁻¹`, optionally clamping η before the variance function.
pub(crate) fn weighted_gram(
    model: &ModelSpec,
    nu: &DVector<f64>,
    v_diag: &DVector<f64>,
    clamp: Option<f64>,
) -> Result<DMatrix<f64>> {
    let p = model.n_coef();
    if nu.len() != p || v_diag.len() != p {
        return Err(Error::dim(format!(
            "nu has {}, V has {}, model has {p} coefficients",
            nu.len(),
            v_diag.len()
        )));
    }
    if v_diag.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("prior variances must be strictly positive"));
    }
    let eta = model.linear_predictor(nu);
    let w = eta.map(|e| {
        let e = clamp.map_or(e, |c| e.clamp(-c, c));
        model.family.variance(e)
    });
    let c = &model.c;
    let mut wc = c.clone();
    for (i, mut row) in wc.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut h = c.transpose() * wc;
    for k in 0..p {
        h[(k, k)] += 1.0 / v_diag[k];
    }
    crate::numerics::symmetrize(&mut h);
    Ok(h)
}

/// Change in `log π` and `log π₀` from a proposed block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDelta {
    pub log_pi: f64,
    pub log_pi0: f64,
}

impl LogDelta {
    pub fn tempered(&self, gamma: f64) -> f64 {
        if gamma == 1.0 {
            self.log_pi
        } else if gamma == 0.0 {
            self.log_pi0
        } else {
            gamma * self.log_pi + (1.0 - gamma) * self.log_pi0
        }
    }
}

/// Scratch space for block updates; one per worker.
#[derive(Debug, Clone)]
pub struct Workspace {
    d_eta: Vec<f64>,
    new_b: Vec<f64>,
    mark: Vec<bool>,
    touched: Vec<usize>,
    delta: Vec<f64>,
}

impl Workspace {
    pub fn new(model: &ModelSpec) -> Self {
        let n = model.n_obs();
        Self {
            d_eta: vec![0.0; n],
            new_b: vec![0.0; n],
            mark: vec![false; n],
            touched: Vec::new(),
            delta: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &r in &self.touched {
            self.mark[r] = false;
            self.d_eta[r] = 0.0;
        }
        self.touched.clear();
        self.delta.clear();
    }
}

/// Cached quantities that make a block update cost `O(rows touched + P·|block|)`
/// instead of `O(nP)`: the linear predictor, `b(η)`, block norms `‖u_ℓ‖²`,
/// and (when tempering) `Q(ν − ν̂)`.
#[derive(Debug, Clone)]
pub struct StateCache {
    eta: Vec<f64>,
    b_eta: Vec<f64>,
    u_sq: Vec<f64>,
    prec_dev: Option<DVector<f64>>,
}

impl StateCache {
    pub fn new(model: &ModelSpec, pql: Option<&PqlFit>, state: &ParamState) -> Self {
        let eta = model.linear_predictor(&state.nu);
        let b_eta = eta.iter().map(|&e| model.family.b(e)).collect();
        let prec_dev = pql.map(|p| p.precision() * (&state.nu - p.nu_hat()));
        Self {
            eta: eta.as_slice().to_vec(),
            b_eta,
            u_sq: model.block_sq_norms(&state.nu),
            prec_dev,
        }
    }

    pub fn u_sq_norms(&self) -> &[f64] {
        &self.u_sq
    }

    /// Evaluates the change from setting `ν_block = new_values`. The workspace
    /// keeps what [`StateCache::commit`] needs.
    pub fn delta(
        &self,
        model: &ModelSpec,
        pql: Option<&PqlFit>,
        state: &ParamState,
        block: &[usize],
        new_values: &[f64],
        ws: &mut Workspace,
    ) -> LogDelta {
        ws.reset();
        ws.delta.extend(block.iter().zip(new_values).map(|(&k, &v)| v - state.nu[k]));

        for (&k, &dk) in block.iter().zip(&ws.delta) {
            if dk == 0.0 {
                continue;
            }
            for &(r, c) in model.column_entries(k) {
                if !ws.mark[r] {
                    ws.mark[r] = true;
                    ws.touched.push(r);
                }
                ws.d_eta[r] += c * dk;
            }
        }
        let mut d_loglik = 0.0;
        for &r in &ws.touched {
            let d = ws.d_eta[r];
            let nb = model.family.b(self.eta[r] + d);
            ws.new_b[r] = nb;
            d_loglik += model.y[r] * d - (nb - self.b_eta[r]);
        }

        let mut d_beta_sq = 0.0;
        let mut new_u_sq = self.u_sq.clone();
        for (&k, &v) in block.iter().zip(new_values) {
            let old = state.nu[k];
            let change = v * v - old * old;
            match model.block_of[k] {
                None => d_beta_sq += change,
                Some(l) => new_u_sq[l] += change,
            }
        }
        // guard against round-off driving a norm slightly negative
        for v in &mut new_u_sq {
            if *v < 0.0 {
                *v = 0.0;
            }
        }

        let mut d_sigma_terms = 0.0;
        let mut d_norm_terms = 0.0;
        for (l, b) in model.blocks.iter().enumerate() {
            if new_u_sq[l] != self.u_sq[l] {
                let a = model.a[l];
                d_sigma_terms -= 0.5 * (new_u_sq[l] - self.u_sq[l]) / state.sigma_sq[l];
                d_norm_terms += (a + 0.5 * b.width as f64)
                    * ((a + 0.5 * new_u_sq[l]).ln() - (a + 0.5 * self.u_sq[l]).ln());
            }
        }

        let log_pi = d_loglik - d_beta_sq / (2.0 * model.sigma_beta_sq) + d_sigma_terms;
        let log_pi0 = match (pql, &self.prec_dev) {
            (Some(pql), Some(g)) => {
                let q = pql.precision();
                let mut d_quad = 0.0;
                for (a_i, &ka) in block.iter().enumerate() {
                    let da = ws.delta[a_i];
                    d_quad += 2.0 * da * g[ka];
                    for (b_i, &kb) in block.iter().enumerate() {
                        d_quad += da * q[(ka, kb)] * ws.delta[b_i];
                    }
                }
                -0.5 * d_quad + d_norm_terms + d_sigma_terms
            }
            _ => f64::NAN,
        };
        LogDelta { log_pi, log_pi0 }
    }

    /// Applies the update last evaluated by [`StateCache::delta`].
    pub fn commit(
        &mut self,
        model: &ModelSpec,
        pql: Option<&PqlFit>,
        state: &mut ParamState,
        block: &[usize],
        new_values: &[f64],
        ws: &Workspace,
    ) {
        for &r in &ws.touched {
            self.eta[r] += ws.d_eta[r];
            self.b_eta[r] = ws.new_b[r];
        }
        for (&k, &v) in block.iter().zip(new_values) {
            let old = state.nu[k];
            if let Some(l) = model.block_of[k] {
                self.u_sq[l] = (self.u_sq[l] + v * v - old * old).max(0.0);
            }
            state.nu[k] = v;
        }
        if let (Some(pql), Some(g)) = (pql, self.prec_dev.as_mut()) {
            let q = pql.precision();
            for (i, &k) in block.iter().enumerate() {
                let d = ws.delta[i];
                if d != 0.0 {
                    g.axpy(d, &q.column(k), 1.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_poisson(y: f64, sigma_beta_sq: f64) -> ModelSpec {
        ModelSpec::new(
            DVector::from_element(1, y),
            DMatrix::from_element(1, 1, 1.0),
            1,
            &[],
            sigma_beta_sq,
            vec![],
            Family::Poisson,
        )
        .unwrap()
    }

    #[test]
    fn cumulant_values() {
        assert_eq!(cumulant(Family::Poisson, 0.0, 0), 1.0);
        assert_relative_eq!(cumulant(Family::BernoulliLogit, 0.0, 0), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(cumulant(Family::BernoulliLogit, 0.0, 2), 0.25);
        assert_eq!(cumulant(Family::BernoulliLogit, 0.0, 1), 0.5);
        // stable branches at extreme predictors
        assert_relative_eq!(cumulant(Family::BernoulliLogit, 800.0, 0), 800.0, epsilon = 1e-12);
        assert!(cumulant(Family::BernoulliLogit, -800.0, 0) >= 0.0);
        assert!(cumulant(Family::BernoulliLogit, -800.0, 0) < 1e-300);
        assert_eq!(cumulant(Family::BernoulliLogit, 800.0, 1), 1.0);
        assert!(cumulant(Family::BernoulliLogit, 30.0, 2) > 0.0);
    }

    #[test]
    fn log_pi_scalar_by_hand() {
        let m = scalar_poisson(2.0, 100.0);
        let s = ParamState::new(DVector::from_element(1, 0.5), vec![]);
        let expected = 2.0 * 0.5 - 0.5f64.exp() - 0.25 / 200.0;
        assert_relative_eq!(log_pi(&m, &s).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(log_pi(&m, &s).unwrap(), -0.649_971_270_700_07, epsilon = 1e-12);
    }

    #[test]
    fn log_pi_prior_scaling_identity() {
        let s = ParamState::new(DVector::from_element(1, 1.7), vec![]);
        let a = log_pi(&scalar_poisson(3.0, 4.0), &s).unwrap();
        let b = log_pi(&scalar_poisson(3.0, 9.0), &s).unwrap();
        let beta_sq = 1.7f64 * 1.7;
        assert_relative_eq!(a - b, -beta_sq / 2.0 * (1.0 / 4.0 - 1.0 / 9.0), epsilon = 1e-13);
    }

    #[test]
    fn variance_term_with_zero_u() {
        // y = 0 and ν = 0 so the data term is −n·b(0) = −n for Poisson.
        let n = 3;
        let c = DMatrix::from_fn(n, 10, |i, j| ((i + j) as f64).sin());
        let m = ModelSpec::new(DVector::zeros(n), c, 0, &[10], 1e8, vec![0.01], Family::Poisson).unwrap();
        let s = ParamState::new(DVector::zeros(10), vec![1.0]);
        assert_relative_eq!(log_pi(&m, &s).unwrap() + n as f64, -0.01, epsilon = 1e-14);
    }

    #[test]
    fn neg_hessian_scalar() {
        let m = scalar_poisson(2.0, 100.0);
        let h = neg_hessian_nu(&m, &DVector::zeros(1), &DVector::from_element(1, 100.0)).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.01, epsilon = 1e-15);
    }

    #[test]
    fn neg_hessian_logit_at_zero_predictor() {
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 1.0]);
        let m = ModelSpec::new(y, c.clone(), 2, &[], 10.0, vec![], Family::BernoulliLogit).unwrap();
        let v = DVector::from_vec(vec![10.0, 10.0]);
        let h = neg_hessian_nu(&m, &DVector::zeros(2), &v).unwrap();
        let expected = c.transpose() * &c * 0.25 + DMatrix::from_diagonal(&v.map(|x| 1.0 / x));
        assert_relative_eq!(h, expected, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = DMatrix::from_element(2, 1, 1.0);
        assert!(ModelSpec::new(DVector::from_vec(vec![0.5, 1.0]), c.clone(), 1, &[], 1.0, vec![], Family::Poisson).is_err());
        assert!(ModelSpec::new(DVector::from_vec(vec![2.0, 1.0]), c.clone(), 1, &[], 1.0, vec![], Family::BernoulliLogit).is_err());
        assert!(ModelSpec::new(DVector::from_vec(vec![-1.0, 1.0]), c.clone(), 1, &[], 1.0, vec![], Family::Poisson).is_err());
        assert!(ModelSpec::new(DVector::from_vec(vec![0.0, 1.0]), c.clone(), 1, &[], 0.0, vec![], Family::Poisson).is_err());
        assert!(ModelSpec::new(DVector::from_vec(vec![0.0, 1.0]), c, 0, &[1], 1.0, vec![0.0], Family::Poisson).is_err());
        let m = scalar_poisson(1.0, 1.0);
        let bad = ParamState::new(DVector::zeros(2), vec![]);
        assert!(log_pi(&m, &bad).is_err());
    }

    #[test]
    fn non_positive_variance_is_rejected() {
        let c = DMatrix::from_element(2, 1, 1.0);
        let m = ModelSpec::new(DVector::from_vec(vec![0.0, 1.0]), c, 0, &[1], 1.0, vec![0.01], Family::Poisson).unwrap();
        let s = ParamState::new(DVector::zeros(1), vec![0.0]);
        assert!(log_pi(&m, &s).is_err());
    }
}
