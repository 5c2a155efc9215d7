//! Seeded data generators: the Poisson additive model with a `cos(4πx)`
//! nonlinearity, and a longitudinal logistic model with subject intercepts,
//! binary covariates and a smooth age effect.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::logistic;
use crate::numerics::SeedTree;

/// Default sample size of the Poisson experiment.
pub const POISSON_DEFAULT_N: usize = 500;
/// True coefficient of the binary covariate `x1`.
pub const POISSON_BETA_X1: f64 = 0.7;

/// True smooth component of the Poisson experiment.
pub fn poisson_true_curve(x2: f64) -> f64 {
    2.0 * x2 + (4.0 * std::f64::consts::PI * x2).cos()
}

/// Everything needed to recompute each row's mean parameter exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub kind: String,
    pub seed: u64,
    /// Named true coefficients (including the intercept when present).
    pub coefficients: Vec<(String, f64)>,
    /// Random-effect standard deviation, when the model has one.
    pub sigma_u: Option<f64>,
    /// Subject intercepts, in subject order.
    pub random_intercepts: Vec<f64>,
    /// Name of the predictor carrying the smooth effect.
    pub smooth_predictor: String,
    /// True smooth evaluated at every row.
    pub smooth_at_rows: Vec<f64>,
    /// True smooth on an even grid over the predictor's range.
    pub grid: Vec<f64>,
    pub smooth_on_grid: Vec<f64>,
    /// Linear predictor of every row.
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub table: Table,
    pub truth: Truth,
}

fn even_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `x1 ~ Bernoulli(0.5)`, `x2 ~ U[0,1]`,
/// `y ~ Poisson(exp(0.7 x1 + 2 x2 + cos(4π x2)))`. Columns `y, x1, x2`.
pub fn simulate_poisson(n: usize, seed: u64) -> Result<SimulatedDataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = SeedTree::new(seed).stream(0, 0);
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let unif = Uniform::new(0.0, 1.0).expect("valid range");
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut smooth = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    for _ in 0..n {
        let a = if coin.sample(&mut rng) { 1.0 } else { 0.0 };
        let b: f64 = unif.sample(&mut rng);
        let f = poisson_true_curve(b);
        let e = POISSON_BETA_X1 * a + f;
        let count: f64 = Poisson::new(e.exp())
            .map_err(|err| Error::Numeric(format!("poisson rate: {err}")))?
            .sample(&mut rng);
        x1.push(a);
        x2.push(b);
        y.push(count);
        smooth.push(f);
        eta.push(e);
    }
    let mut table = Table::new();
    table.push_numeric("y", &y)?;
    table.push_numeric("x1", &x1)?;
    table.push_numeric("x2", &x2)?;
    let grid = even_grid(0.0, 1.0, 200);
    Ok(SimulatedDataset {
        table,
        truth: Truth {
            kind: "poisson".into(),
            seed,
            coefficients: vec![("x1".into(), POISSON_BETA_X1), ("x2".into(), 2.0)],
            sigma_u: None,
            random_intercepts: Vec::new(),
            smooth_predictor: "x2".into(),
            smooth_at_rows: smooth,
            smooth_on_grid: grid.iter().map(|&g| poisson_true_curve(g)).collect(),
            grid,
            eta,
        },
    })
}

/// Fixed-effect names of the longitudinal model, in column order.
pub const LOGIT_COVARIATES: [&str; 9] = [
    "vitamin_a", "male", "height", "stunted", "visit2", "visit3", "visit4", "visit5", "visit6",
];

/// Settings for [`simulate_logit_longitudinal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitSettings {
    pub n_subjects: usize,
    /// Maximum visits per subject; each subject has between 2 and this many
    /// (or exactly one when the maximum is 1).
    pub n_visits: usize,
    pub sigma_u: f64,
    pub intercept: f64,
    /// Coefficients for [`LOGIT_COVARIATES`].
    pub fixed_effects: Vec<f64>,
}

impl Default for LogitSettings {
    fn default() -> Self {
        Self {
            n_subjects: 275,
            n_visits: 6,
            sigma_u: 0.928,
            intercept: -2.0,
            fixed_effects: vec![0.61, 0.563, 0.0338, 0.474, -1.2, -0.629, -1.37, 0.468, -0.0384],
        }
    }
}

/// Default smooth age effect (age in months): a bump that rises through the
/// second year and falls back by age five.
pub fn default_age_effect(age: f64) -> f64 {
    let t = (age - 36.0) / 18.0;
    (-t * t).exp() - 0.5 * (age - 36.0) / 36.0
}

/// Longitudinal Bernoulli data:
/// `logit P(y_ij = 1) = β0 + U_i + βᵀx_ij + f(age_ij)`, `U_i ~ N(0, σ_U²)`.
/// Columns `y, subject, age, vitamin_a, male, height, stunted, visit2..6`.
pub fn simulate_logit_longitudinal<F: Fn(f64) -> f64>(
    settings: &LogitSettings,
    f: F,
    seed: u64,
) -> Result<SimulatedDataset> {
    let s = settings;
    if s.n_subjects == 0 || s.n_visits == 0 {
        return Err(Error::invalid("subject and visit counts must be positive"));
    }
    if !(s.sigma_u >= 0.0) || !s.sigma_u.is_finite() {
        return Err(Error::invalid("sigma_u must be finite and non-negative"));
    }
    if s.fixed_effects.len() != LOGIT_COVARIATES.len() {
        return Err(Error::dim(format!(
            "expected {} fixed effects, got {}",
            LOGIT_COVARIATES.len(),
            s.fixed_effects.len()
        )));
    }
    let mut rng = SeedTree::new(seed).stream(0, 0);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let unif = Uniform::new(0.0, 1.0).expect("valid range");

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); LOGIT_COVARIATES.len()];
    let (mut y, mut subject, mut age, mut smooth, mut eta) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut intercepts = Vec::with_capacity(s.n_subjects);
    let width = s.n_subjects.to_string().len();
    for i in 0..s.n_subjects {
        let u = s.sigma_u * normal.sample(&mut rng);
        intercepts.push(u);
        let male = f64::from(u8::from(rng.random_bool(0.5)));
        let stunted = f64::from(u8::from(rng.random_bool(0.15)));
        let height: f64 = normal.sample(&mut rng);
        let baseline_age = 12.0 + 48.0 * unif.sample(&mut rng);
        let visits = if s.n_visits == 1 { 1 } else { rng.random_range(2..=s.n_visits) };
        for v in 0..visits {
            let vit_a = f64::from(u8::from(rng.random_bool(0.2)));
            let a = baseline_age + 3.0 * v as f64;
            let x = [
                vit_a,
                male,
                height,
                stunted,
                f64::from(u8::from(v == 1)),
                f64::from(u8::from(v == 2)),
                f64::from(u8::from(v == 3)),
                f64::from(u8::from(v == 4)),
                f64::from(u8::from(v == 5)),
            ];
            let fa = f(a);
            let e = s.intercept + u + x.iter().zip(&s.fixed_effects).map(|(a, b)| a * b).sum::<f64>() + fa;
            let outcome = f64::from(u8::from(rng.random_bool(logistic(e).clamp(0.0, 1.0))));
            for (c, val) in cols.iter_mut().zip(x) {
                c.push(val);
            }
            y.push(outcome);
            subject.push(format!("s{:0width$}", i + 1));
            age.push(a);
            smooth.push(fa);
            eta.push(e);
        }
    }

    let mut table = Table::new();
    table.push_numeric("y", &y)?;
    table.push_text("subject", subject)?;
    table.push_numeric("age", &age)?;
    for (name, c) in LOGIT_COVARIATES.iter().zip(&cols) {
        table.push_numeric(name, c)?;
    }
    let lo = age.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = age.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = even_grid(lo, hi, 200);
    let mut coefficients = vec![("(Intercept)".to_string(), s.intercept)];
    coefficients.extend(LOGIT_COVARIATES.iter().map(|n| n.to_string()).zip(s.fixed_effects.iter().copied()));
    Ok(SimulatedDataset {
        table,
        truth: Truth {
            kind: "logit".into(),
            seed,
            coefficients,
            sigma_u: Some(s.sigma_u),
            random_intercepts: intercepts,
            smooth_predictor: "age".into(),
            smooth_at_rows: smooth,
            smooth_on_grid: grid.iter().map(|&g| f(g)).collect(),
            grid,
            eta,
        },
    })
}
