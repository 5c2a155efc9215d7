//! Bayesian generalised linear mixed models fitted by a tempered sequential
//! Monte Carlo sampler, with importance-sampling, random-walk Metropolis and
//! slice-sampling baselines.
//!
//! The usual flow is [`pipeline::prepare`] (data → design → PQL initial
//! distribution) followed by [`pipeline::fit`] with a [`config::RunConfig`].
//! Lower-level pieces are public for direct use: [`model`] holds the target
//! densities, [`smc`] the sampler, [`baselines`] the comparison samplers.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod pql;
pub mod simulate;
pub mod smc;

pub use error::{Error, ErrorKind, Result};
pub use model::{Family, ModelSpec, ParamState};
pub use pql::{pql_fit, PqlFit, PqlOptions};
pub use smc::{run as run_smc, MoveConfig, RunTrace, SmcConfig};
