//! Runs SMC, the importance sampler, random-walk Metropolis and the slice
//! sampler on the same Poisson data and compares β₁ across them.
//!
//! cargo run --release --example sampler_comparison

use glmm_smc::config::{RunConfig, SamplerKind};
use glmm_smc::diagnostics::{ks_statistic, qq_pairs};
use glmm_smc::pipeline::{fit, prepare};

fn main() -> glmm_smc::Result<()> {
    let base = RunConfig::preset("paper-4.1")?;
    let prep = prepare(&base)?;
    let mut outs = Vec::new();
    for sampler in [SamplerKind::Smc, SamplerKind::Importance, SamplerKind::Rwmh, SamplerKind::Slice] {
        let mut c = base.clone();
        c.sampler = sampler;
        let out = fit(&c, &prep)?;
        println!("{:>5}: {:.1}s", sampler.name(), out.sampler_seconds);
        outs.push(out);
    }
    if let (Some(ess), Some(true)) = (outs[1].is_ess, outs[1].is_depleted) {
        println!("importance sampler depleted (ESS {ess:.1})");
    }
    let smc = outs[0].column("x1").expect("x1");
    for out in &outs {
        let k = out.names.iter().position(|n| n == "x1").expect("x1");
        let s = &out.summaries[k];
        print!("{:>5}: beta1 mean {:.4} sd {:.4}", out.sampler.name(), s.mean, s.sd);
        if out.weights.is_none() || out.sampler == SamplerKind::Smc {
            let x = out.column("x1").expect("x1");
            print!("  KS vs SMC {:.4}", ks_statistic(&smc, &x)?);
        }
        println!();
    }
    let rwmh = outs[2].column("x1").expect("x1");
    println!("QQ (SMC, RWMH) at deciles:");
    for (a, b) in qq_pairs(&smc, &rwmh, 10)? {
        println!("  {a:.4}  {b:.4}");
    }
    Ok(())
}
