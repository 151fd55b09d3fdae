use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bench::{benchmark, Family};
use crate::gp::{GpConfig, MutationMix, PrimitiveSet};
use crate::kaizen::{KaizenConfig, StopRule};
use crate::rvm::RvmConfig;

use super::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

pub const KEIJZER_DEFAULTS: &str = include_str!("../../configs/keijzer.toml");
pub const NGUYEN_DEFAULTS: &str = include_str!("../../configs/nguyen.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSection {
    pub population_size: usize,
    pub max_depth: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub uniform_mutation: f64,
    pub erc_mutation: f64,
    pub init_min_depth: usize,
    pub init_max_depth: usize,
    pub mutation_max_depth: usize,
}

/// Stop settings. Generation keys belong to keijzer mode, budget keys to
/// nguyen mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KaizenSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitness_stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_node_evals: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
    pub cache_capacity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub benchmark: String,
    pub mode: Family,
    pub trials: usize,
    pub seed: u64,
    pub gp: GpSection,
    pub kaizen: KaizenSection,
    pub rvm: RvmConfig,
    pub output: OutputSection,
}

/// Parses a config file. Missing sections and keys are errors, so every
/// file states its full configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl RunConfig {
    /// Shipped defaults for the benchmark's family, with `benchmark` set.
    pub fn defaults_for(name: &str) -> Result<RunConfig, CliError> {
        let spec = benchmark(name).map_err(|e| CliError::Config(e.to_string()))?;
        let text = match spec.family {
            Family::Keijzer => KEIJZER_DEFAULTS,
            Family::Nguyen => NGUYEN_DEFAULTS,
        };
        let mut cfg = parse_config(text)?;
        cfg.benchmark = spec.name.to_string();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {CONFIG_SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        let spec =
            benchmark(&self.benchmark).map_err(|e| CliError::Config(format!("benchmark: {e}")))?;
        if spec.family != self.mode {
            return Err(CliError::Config(format!(
                "mode: benchmark {} belongs to {:?} mode",
                spec.name, spec.family
            )));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials: must be at least 1".into()));
        }
        let k = &self.kaizen;
        let (required, foreign) = match self.mode {
            Family::Keijzer => (
                [
                    ("max_generations", k.max_generations.is_some()),
                    ("fitness_stop", k.fitness_stop.is_some()),
                ],
                [
                    ("max_node_evals", k.max_node_evals.is_some()),
                    ("abs_error", k.abs_error.is_some()),
                ],
            ),
            Family::Nguyen => (
                [
                    ("max_node_evals", k.max_node_evals.is_some()),
                    ("abs_error", k.abs_error.is_some()),
                ],
                [
                    ("max_generations", k.max_generations.is_some()),
                    ("fitness_stop", k.fitness_stop.is_some()),
                ],
            ),
        };
        if let Some((key, _)) = required.iter().find(|(_, set)| !set) {
            return Err(CliError::Config(format!(
                "kaizen.{key}: required in {:?} mode",
                self.mode
            )));
        }
        if let Some((key, _)) = foreign.iter().find(|(_, set)| *set) {
            return Err(CliError::Config(format!(
                "kaizen.{key}: not used in {:?} mode",
                self.mode
            )));
        }
        self.kaizen_config()?
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn kaizen_config(&self) -> Result<KaizenConfig, CliError> {
        let spec = benchmark(&self.benchmark).map_err(|e| CliError::Config(e.to_string()))?;
        let g = &self.gp;
        let primitive_set = match self.mode {
            Family::Keijzer => PrimitiveSet::keijzer(),
            Family::Nguyen => PrimitiveSet::nguyen(spec.dims),
        };
        let k = &self.kaizen;
        let stop = match self.mode {
            Family::Keijzer => StopRule::Generations {
                max_generations: k.max_generations.unwrap_or(0),
                fitness_stop: k.fitness_stop.unwrap_or(f64::NAN),
            },
            Family::Nguyen => StopRule::NodeBudget {
                max_node_evals: k.max_node_evals.unwrap_or(0),
                abs_error: k.abs_error.unwrap_or(f64::NAN),
            },
        };
        Ok(KaizenConfig {
            stop,
            gp: GpConfig {
                population_size: g.population_size,
                max_depth: g.max_depth,
                crossover_prob: g.crossover_prob,
                mutation_prob: g.mutation_prob,
                mutation_mix: MutationMix {
                    uniform: g.uniform_mutation,
                    erc: g.erc_mutation,
                },
                init_min_depth: g.init_min_depth,
                init_max_depth: g.init_max_depth,
                mutation_max_depth: g.mutation_max_depth,
                primitive_set,
            },
            rvm: self.rvm.clone(),
            cache_capacity: k.cache_capacity,
        })
    }
}
