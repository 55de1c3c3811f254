//! Experiment configuration: one JSON document that pins everything a run
//! needs — force law, particle count, dataset sizes, simulator constants,
//! model variant, graph policy, optimizer settings, evaluation horizons and
//! the master seed. Unknown fields are rejected so typos fail loudly, and
//! [`config_hash`] fingerprints the exact configuration into eval reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::DepthPolicy;
use crate::models::{GraphPolicy, ModelVariant};
use crate::sim::{ForceLaw, SimConfig};
use crate::train::TrainConfig;

use super::fnv1a64;

/// Trajectory counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl DatasetSizes {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

fn default_dataset() -> DatasetSizes {
    DatasetSizes { train: 100, valid: 10, test: 10 }
}

fn default_variant() -> ModelVariant {
    ModelVariant::Delta
}

fn default_graph() -> GraphPolicy {
    GraphPolicy::Hier { depth: DepthPolicy::Auto, periodic: true }
}

fn default_taus() -> Vec<usize> {
    vec![20, 200]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub force_law: ForceLaw,
    pub n_particles: usize,
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSizes,
    /// Simulator constants; omit to derive them from `n_particles` and
    /// `force_law` (box area 12 per particle, default constants).
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default = "default_variant")]
    pub variant: ModelVariant,
    #[serde(default = "default_graph")]
    pub graph: GraphPolicy,
    #[serde(default)]
    pub train: TrainConfig,
    /// Rollout horizons (base steps) at which evaluation reports metrics.
    #[serde(default = "default_taus")]
    pub eval_taus: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults for an N-particle experiment; every field can be overridden
    /// after the fact (or in the JSON form).
    pub fn for_scale(n_particles: usize, force_law: ForceLaw) -> Self {
        ExperimentConfig {
            force_law,
            n_particles,
            dataset: default_dataset(),
            sim: None,
            variant: default_variant(),
            graph: default_graph(),
            train: TrainConfig::default(),
            eval_taus: default_taus(),
            seed: 0,
        }
    }

    /// The simulator configuration this experiment runs with.
    pub fn sim_config(&self) -> SimConfig {
        self.sim
            .clone()
            .unwrap_or_else(|| SimConfig::for_particle_count(self.n_particles, self.force_law))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be >= 1".into()));
        }
        let sim = self.sim_config();
        sim.validate()?;
        if sim.force_law != self.force_law {
            return Err(Error::Config(format!(
                "force_law is {} but sim.force_law is {}",
                self.force_law, sim.force_law
            )));
        }
        validate_graph_policy(&self.graph)?;
        self.train.validate()?;
        if self.eval_taus.is_empty() {
            return Err(Error::Config("eval_taus must not be empty".into()));
        }
        for &tau in &self.eval_taus {
            if tau == 0 {
                return Err(Error::Config("eval tau 0 is meaningless".into()));
            }
            if tau > sim.n_base_steps {
                return Err(Error::Config(format!(
                    "eval tau {tau} exceeds trajectory length {}",
                    sim.n_base_steps
                )));
            }
        }
        Ok(())
    }
}

/// Structural checks any graph policy must pass, shared by config validation
/// and policies assembled from command-line flags.
pub fn validate_graph_policy(policy: &GraphPolicy) -> Result<()> {
    match *policy {
        GraphPolicy::Knn { k: 0 } => Err(Error::Config("knn graph needs k >= 1".into())),
        GraphPolicy::Hier { depth: DepthPolicy::Fixed(d), .. } if d < 2 => {
            Err(Error::Config(format!("hierarchy depth must be >= 2, got {d}")))
        }
        GraphPolicy::Hier { depth: DepthPolicy::Adaptive { kmax: 0 }, .. } => {
            Err(Error::Config("adaptive depth needs kmax >= 1".into()))
        }
        _ => Ok(()),
    }
}

/// Stable fingerprint of the exact configuration (hash of its canonical JSON
/// encoding); eval reports carry it so metric files are traceable.
pub fn config_hash(config: &ExperimentConfig) -> u64 {
    let bytes = serde_json::to_vec(config).expect("config serialization cannot fail");
    fnv1a64(&bytes)
}

pub fn save_experiment_config(path: impl AsRef<Path>, config: &ExperimentConfig) -> Result<()> {
    let mut text = serde_json::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("cannot encode config: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&path)?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("bad config {}: {e}", path.as_ref().display()))
    })?;
    config.validate()?;
    Ok(config)
}
