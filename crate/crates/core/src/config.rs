//! Run configuration: a TOML document with model, sampler and output
//! sections, named presets, and dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{BlockClass, Design, PredictorKind, PredictorSpec};
use crate::error::{Error, Result};
use crate::model::Family;
use crate::pql::PqlOptions;
use crate::simulate::{LOGIT_COVARIATES, POISSON_DEFAULT_N};
use crate::smc::MoveConfig;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "GLMM_SMC_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Smc,
    #[serde(rename = "is", alias = "importance")]
    Importance,
    Rwmh,
    Slice,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Smc => "smc",
            SamplerKind::Importance => "is",
            SamplerKind::Rwmh => "rwmh",
            SamplerKind::Slice => "slice",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smc" => Ok(SamplerKind::Smc),
            "is" | "importance" => Ok(SamplerKind::Importance),
            "rwmh" => Ok(SamplerKind::Rwmh),
            "slice" => Ok(SamplerKind::Slice),
            other => Err(Error::Config(format!("unknown sampler {other:?} (smc, is, rwmh, slice)"))),
        }
    }
}

/// Which generator to use when no data file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    /// `poisson` or `logit`.
    pub kind: String,
    /// Rows (Poisson) or subjects (logit).
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// CSV with a header row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Generated dataset used when `data` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    pub response: String,
    pub family: Family,
    pub intercept: bool,
    pub predictors: Vec<PredictorSpec>,
    pub sigma_beta_sq: f64,
    /// Inverse-gamma hyperparameter `A` shared by every variance component.
    pub a: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            data: None,
            simulate: None,
            response: "y".into(),
            family: Family::Poisson,
            intercept: true,
            predictors: Vec::new(),
            sigma_beta_sq: 1e8,
            a: 0.01,
        }
    }
}

/// Block layout of the move kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionSpec {
    /// `singleton` (one block per coefficient), `single` (one block for
    /// all), or `terms` (fixed effects, then one block per random term).
    Named(String),
    /// Explicit 0-based coefficient index sets.
    Explicit(Vec<Vec<usize>>),
}

/// Proposal covariance multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    Scalar(f64),
    PerBlock(Vec<f64>),
    /// By the class of a block's first coefficient.
    ByClass {
        fixed: f64,
        random_intercept: f64,
        spline: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcSection {
    pub n_particles: usize,
    pub n_stages: usize,
    pub resample_threshold: f64,
    /// Overrides the run seed for the SMC sampler.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub partition: PartitionSpec,
    /// Defaults to `2.4/√|I_j|` per block.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for SmcSection {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            n_stages: 105,
            resample_threshold: 0.5,
            seed: None,
            partition: PartitionSpec::Named("singleton".into()),
            tau: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub iters: usize,
    pub burnin: usize,
}

impl Default for McmcSection {
    fn default() -> Self {
        Self { iters: 20_000, burnin: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceSection {
    pub width: f64,
}

impl Default for SliceSection {
    fn default() -> Self {
        Self { width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsSection {
    pub n: usize,
}

impl Default for IsSection {
    fn default() -> Self {
        Self { n: 5000 }
    }
}

/// Replacement centre for the initial distribution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sampler: SamplerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub smc: SmcSection,
    pub mcmc: McmcSection,
    pub slice: SliceSection,
    pub is: IsSection,
    pub pql: PqlOptions,
    pub init: InitSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            sampler: SamplerKind::Smc,
            out_dir: None,
            model: ModelConfig::default(),
            smc: SmcSection::default(),
            mcmc: McmcSection::default(),
            slice: SliceSection::default(),
            is: IsSection::default(),
            pql: PqlOptions::default(),
            init: InitSection::default(),
        }
    }
}

fn predictor(name: &str, kind: PredictorKind, knots: Option<usize>) -> PredictorSpec {
    PredictorSpec {
        name: name.into(),
        kind,
        spline_knots: knots,
    }
}

/// Names accepted by [`RunConfig::preset`].
pub const PRESETS: [&str; 2] = ["paper-4.1", "paper-4.2-structure"];

impl RunConfig {
    /// Named configurations with fixed tuning constants.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-4.1" => Ok(Self {
                model: ModelConfig {
                    simulate: Some(SimulateSpec {
                        kind: "poisson".into(),
                        n: POISSON_DEFAULT_N,
                        seed: 1,
                    }),
                    family: Family::Poisson,
                    predictors: vec![
                        predictor("x1", PredictorKind::Binary, None),
                        predictor("x2", PredictorKind::Continuous, Some(10)),
                    ],
                    ..ModelConfig::default()
                },
                smc: SmcSection {
                    n_particles: 1000,
                    n_stages: 105,
                    tau: Some(TauSpec::Scalar(1.0 / 3.0)),
                    ..SmcSection::default()
                },
                ..Self::default()
            }),
            "paper-4.2-structure" => {
                let mut predictors: Vec<PredictorSpec> = LOGIT_COVARIATES
                    .iter()
                    .map(|&n| {
                        let kind = if n == "height" { PredictorKind::Continuous } else { PredictorKind::Binary };
                        predictor(n, kind, None)
                    })
                    .collect();
                predictors.push(predictor("age", PredictorKind::Continuous, Some(20)));
                predictors.push(predictor("subject", PredictorKind::Categorical, None));
                Ok(Self {
                    model: ModelConfig {
                        simulate: Some(SimulateSpec {
                            kind: "logit".into(),
                            n: 275,
                            seed: 1,
                        }),
                        family: Family::BernoulliLogit,
                        predictors,
                        ..ModelConfig::default()
                    },
                    smc: SmcSection {
                        n_particles: 1000,
                        n_stages: 305,
                        tau: Some(TauSpec::ByClass {
                            fixed: 3.0,
                            random_intercept: 6.0,
                            spline: 5.0,
                        }),
                        ..SmcSection::default()
                    },
                    ..Self::default()
                })
            }
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (available: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `key=value` overrides; the value is parsed as a TOML value
    /// (falling back to a bare string), and the key may be dotted.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut doc: toml::Table = toml::from_str(&self.to_toml_string()?).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            set_path(&mut doc, key.trim(), value)?;
        }
        let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    /// Seed used by the chosen sampler.
    pub fn sampler_seed(&self) -> u64 {
        match self.sampler {
            SamplerKind::Smc => self.smc.seed.unwrap_or(self.seed),
            _ => self.seed,
        }
    }

    /// Checks settings that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.model.data.is_none() && self.model.simulate.is_none() {
            return Err(Error::Config("model.data is required".into()));
        }
        if self.model.predictors.is_empty() && !self.model.intercept {
            return Err(Error::Config("model has no terms".into()));
        }
        match self.sampler {
            SamplerKind::Smc => {
                if self.smc.n_particles == 0 {
                    return Err(Error::Config("smc.n_particles must be positive".into()));
                }
                if self.smc.n_stages < 6 {
                    return Err(Error::Config("smc.n_stages must be at least 6".into()));
                }
                if !(0.0..=1.0).contains(&self.smc.resample_threshold) {
                    return Err(Error::Config("smc.resample_threshold must lie in [0, 1]".into()));
                }
            }
            SamplerKind::Importance => {
                if self.is.n == 0 {
                    return Err(Error::Config("is.n must be positive".into()));
                }
            }
            SamplerKind::Rwmh | SamplerKind::Slice => {
                if self.mcmc.iters <= self.mcmc.burnin {
                    return Err(Error::Config("mcmc.iters must exceed mcmc.burnin".into()));
                }
                if self.sampler == SamplerKind::Slice && !(self.slice.width > 0.0) {
                    return Err(Error::Config("slice.width must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Resolves the move-kernel partition and scalings against a design.
    pub fn move_config(&self, design: &Design) -> Result<MoveConfig> {
        let p = design.n_coef();
        let partition = match &self.smc.partition {
            PartitionSpec::Named(name) => match name.as_str() {
                "singleton" => (0..p).map(|k| vec![k]).collect(),
                "single" | "one-block" => vec![(0..p).collect()],
                "terms" => design.term_partition(),
                other => {
                    return Err(Error::Config(format!(
                        "unknown partition {other:?} (singleton, single, terms, or explicit index lists)"
                    )))
                }
            },
            PartitionSpec::Explicit(sets) => sets.clone(),
        };
        let tau = match &self.smc.tau {
            None => MoveConfig::default_tau(&partition),
            Some(TauSpec::Scalar(t)) => vec![*t; partition.len()],
            Some(TauSpec::PerBlock(v)) => v.clone(),
            Some(TauSpec::ByClass {
                fixed,
                random_intercept,
                spline,
            }) => partition
                .iter()
                .map(|set| match set.first().and_then(|&k| design.class_of_coef(k)) {
                    None => *fixed,
                    Some(BlockClass::RandomIntercept) => *random_intercept,
                    Some(BlockClass::Spline) => *spline,
                })
                .collect(),
        };
        MoveConfig::new(partition, tau, p).map_err(|e| Error::Config(format!("smc.partition/smc.tau: {e}")))
    }

    /// Label shared by runs that differ only in their seed.
    pub fn group_label(&self) -> String {
        let partition = match &self.smc.partition {
            PartitionSpec::Named(n) => n.clone(),
            PartitionSpec::Explicit(sets) => format!("{}-blocks", sets.len()),
        };
        match self.sampler {
            SamplerKind::Smc => format!(
                "smc N={} S={} partition={}",
                self.smc.n_particles, self.smc.n_stages, partition
            ),
            SamplerKind::Importance => format!("is n={}", self.is.n),
            SamplerKind::Rwmh => format!(
                "rwmh iters={} burnin={} partition={}",
                self.mcmc.iters, self.mcmc.burnin, partition
            ),
            SamplerKind::Slice => format!("slice iters={} burnin={}", self.mcmc.iters, self.mcmc.burnin),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key {key:?}")))?;
    let mut table = doc;
    for part in parts {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
