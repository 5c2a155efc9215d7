#![allow(dead_code)]

use glmm_smc::model::{Family, ModelSpec};
use glmm_smc::numerics::SeedTree;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Poisson regression on an intercept and one uniform covariate, no random effects.
pub fn two_coef_poisson(n: usize, seed: u64) -> ModelSpec {
    let mut rng = SeedTree::new(seed).stream(0, 0);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v: &f64| Poisson::new((0.5 + 0.8 * v).exp()).unwrap().sample(&mut rng))
        .collect();
    let c = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    ModelSpec::new(DVector::from_vec(y), c, 2, &[], 1e8, vec![], Family::Poisson).unwrap()
}

/// Small mixed model: intercept + covariate, a 4-level random intercept and
/// a dense 3-column block, so every structural path is exercised.
pub fn small_mixed(family: Family, seed: u64) -> ModelSpec {
    let n = 40;
    let mut rng = SeedTree::new(seed).stream(0, 0);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let c = DMatrix::from_fn(n, 9, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        2..=5 => f64::from(u8::from(i % 4 == j - 2)),
        _ => 0.5 * w[i][j - 6],
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = 0.3 + 0.6 * x[i] + 0.2 * (i % 4) as f64 - 0.3;
            match family {
                Family::Poisson => Poisson::new(eta.exp()).unwrap().sample(&mut rng),
                Family::BernoulliLogit => f64::from(u8::from(rng.random_bool(glmm_smc::model::logistic(eta)))),
            }
        })
        .collect();
    ModelSpec::new(DVector::from_vec(y), c, 2, &[4, 3], 1e8, vec![0.01, 0.01], family).unwrap()
}
