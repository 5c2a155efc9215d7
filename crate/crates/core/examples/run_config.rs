//! Configuration handling: presets, TOML round trip, dotted-key overrides,
//! and writing a complete run directory (what `glmm-smc fit` does).
//!
//! cargo run --release --example run_config -- <output-dir>

use std::path::PathBuf;

use glmm_smc::cli::write_fit;
use glmm_smc::config::RunConfig;
use glmm_smc::pipeline::{fit, prepare};

fn main() -> glmm_smc::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("glmm-smc-example"), PathBuf::from);
    let config = RunConfig::preset("paper-4.1")?.with_overrides(&[
        "smc.n_particles=300",
        "smc.n_stages=40",
        "smc.partition=\"terms\"",
        "smc.tau=[0.5, 0.3]",
        "seed=42",
    ])?;
    println!("{}", config.to_toml_string()?);
    let started = std::time::Instant::now();
    let prep = prepare(&config)?;
    let result = fit(&config, &prep)?;
    std::fs::create_dir_all(&out).map_err(|e| glmm_smc::Error::io(&out, e))?;
    write_fit(&out, &config, &prep, &result, started.elapsed().as_secs_f64())?;
    println!("wrote {}", out.display());
    Ok(())
}
