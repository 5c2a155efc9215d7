//! Building a model directly from matrices and driving the sampler by hand:
//! an explicit block partition, per-block τ, and the tempering trace.
//!
//! cargo run --release --example custom_model

use glmm_smc::model::{Family, ModelSpec};
use glmm_smc::numerics::SeedTree;
use glmm_smc::pql::{pql_fit, PqlOptions};
use glmm_smc::smc::{run, MoveConfig, SmcConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn main() -> glmm_smc::Result<()> {
    // Binary outcomes for 8 groups of 25, one covariate, random group intercepts.
    let mut rng = SeedTree::new(11).stream(0, 0);
    let (groups, per) = (8, 25);
    let n = groups * per;
    let u: Vec<f64> = (0..groups).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let p = glmm_smc::model::logistic(-0.5 + 1.2 * x[i] + u[i / per]);
            f64::from(u8::from(rng.random_bool(p)))
        })
        .collect();
    let c = DMatrix::from_fn(n, 2 + groups, |i, j| match j {
        0 => 1.0,
        1 => x[i],
        g => f64::from(u8::from(i / per == g - 2)),
    });
    let model = ModelSpec::new(DVector::from_vec(y), c, 2, &[groups], 1e8, vec![0.01], Family::BernoulliLogit)?;

    let pql = pql_fit(&model, &PqlOptions::default())?;
    let partition = vec![vec![0, 1], (2..2 + groups).collect()];
    let moves = MoveConfig::new(partition.clone(), vec![1.0, 0.5], model.n_coef())?;
    let pql = pql.with_partition(&partition)?;
    let config = SmcConfig::new(500, 40, moves, 7);
    let (system, trace) = run(&model, &pql, &config)?;

    println!("stage  gamma   ESS");
    for s in (1..=trace.ess.len()).step_by(5) {
        println!("{s:>5}  {:.3}  {:>6.1}", trace.gammas[s], trace.ess[s - 1]);
    }
    println!("resampled at {:?}", trace.resample_stages);
    let draws = system.draws();
    let w = system.weights();
    let mean = |k: usize| draws.column(k).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    println!("beta0 {:.3}, beta1 {:.3}, sigma_sq {:.3}", mean(0), mean(1), mean(2 + groups));
    Ok(())
}
