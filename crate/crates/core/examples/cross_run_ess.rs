//! Cross-run effective sample size: replicate SMC runs at several numbers of
//! stages, for singleton and one-block move kernels, plus RWMH replicates.
//!
//! cargo run --release --example cross_run_ess [-- <replicates> <n_particles>]

use glmm_smc::config::{PartitionSpec, RunConfig, SamplerKind};
use glmm_smc::diagnostics::{carpenter_ess, weighted_mean_var};
use glmm_smc::pipeline::{fit, prepare, Prepared};

fn cross_run(base: &RunConfig, prep: &Prepared, reps: u64) -> glmm_smc::Result<f64> {
    let (mut means, mut vars) = (Vec::new(), Vec::new());
    for r in 0..reps {
        let mut c = base.clone();
        c.seed = 100 + r;
        let out = fit(&c, prep)?;
        let (m, v) = weighted_mean_var(&out.column("x1").expect("x1"), out.weights.as_deref())?;
        means.push(m);
        vars.push(v);
    }
    Ok(carpenter_ess(&means, &vars)?.value)
}

fn main() -> glmm_smc::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let reps = args.first().copied().unwrap_or(5);
    let n = args.get(1).copied().unwrap_or(300) as usize;
    let mut base = RunConfig::preset("paper-4.1")?;
    base.smc.n_particles = n;
    let prep = prepare(&base)?;
    println!("{reps} replicates, N = {n}");
    println!("{:>5} {:>10} {:>10}", "S", "singleton", "one-block");
    for s in [10, 20, 50, 100] {
        let mut single = base.clone();
        single.smc.n_stages = s;
        let mut block = single.clone();
        block.smc.partition = PartitionSpec::Named("single".into());
        block.smc.tau = None;
        println!("{s:>5} {:>10.1} {:>10.1}", cross_run(&single, &prep, reps)?, cross_run(&block, &prep, reps)?);
    }
    let mut rwmh = base.clone();
    rwmh.sampler = SamplerKind::Rwmh;
    println!("RWMH (20000 iterations, 10000 burn-in): {:.1}", cross_run(&rwmh, &prep, reps)?);
    Ok(())
}
