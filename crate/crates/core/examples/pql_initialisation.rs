//! Penalised quasi-likelihood fit, the Gaussian initial distribution built
//! from it, and how well it approximates the posterior (importance weights).
//!
//! cargo run --release --example pql_initialisation

use glmm_smc::baselines::importance_sampler;
use glmm_smc::config::RunConfig;
use glmm_smc::model::{log_pi, log_pi0};
use glmm_smc::numerics::SeedTree;
use glmm_smc::pipeline::{build_model, simulate_from_spec};
use glmm_smc::pql::{pql_fit, sample_pi0, PqlOptions};

fn main() -> glmm_smc::Result<()> {
    let config = RunConfig::preset("paper-4.1")?;
    let data = simulate_from_spec("poisson", 500, 1)?;
    let (design, model) = build_model(&config, &data.table)?;
    for inflate in [1.0, 2.0] {
        let opts = PqlOptions { inflate, ..PqlOptions::default() };
        let pql = pql_fit(&model, &opts)?;
        println!("inflate {inflate}: converged {} after {} iterations", pql.converged(), pql.iterations());
        for (k, name) in design.coef_names.iter().enumerate().take(3) {
            println!("  {name:>12} {:>8.4} ± {:.4}", pql.nu_hat()[k], pql.sigma()[(k, k)].sqrt());
        }
        println!("  sigma_sq[s(x2)] {:.4}", pql.sigma_sq_hat()[0]);
        let draw = sample_pi0(&pql, &model, &mut SeedTree::new(3).stream(0, 0))?;
        println!(
            "  one draw: log pi = {:.2}, log pi0 = {:.2}",
            log_pi(&model, &draw)?,
            log_pi0(&model, &pql, &draw)?
        );
        let is = importance_sampler(&model, &pql, 5000, SeedTree::new(5))?;
        println!("  importance sampling ESS {:.0} of 5000", is.ess);
    }
    Ok(())
}
