//! Run configuration: one TOML file with a section per pipeline stage.
//!
//! ```toml
//! seed = 7
//!
//! [sim]
//! num_frames = 10
//! appearance_noise = 0.8
//!
//! [dataset]
//! train_scenes = 20
//! test_scenes = 5
//!
//! [train]
//! epochs = 20
//!
//! [engine]
//! threshold = 0.5
//! ```
//!
//! Every field is optional. The top-level seed drives all randomness and
//! overrides the seeds inside `[sim]` and `[train]`.

use std::path::Path;

use anchoring::engine::{EngineConfig, UpdatePolicy};
use anchoring::matcher::{AnalyticParams, Matcher, TrainConfig};
use anchoring::sim::SimConfig;
use anchoring::world_model::{default_rules, GroundingRule};
use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_scenes: usize,
    pub val_scenes: usize,
    pub test_scenes: usize,
    /// Negatives kept per positive in the training split; all when absent.
    pub negative_ratio: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_scenes: 20,
            val_scenes: 2,
            test_scenes: 5,
            negative_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub threshold: f64,
    pub track_staleness: f64,
    pub update_policy: UpdatePolicy,
    /// Parameters of the analytic matcher, used when no model is given.
    pub analytic: AnalyticParams,
    pub grounding_rules: Vec<GroundingRule>,
}

impl Default for EngineSection {
    fn default() -> Self {
        let e = EngineConfig::default();
        EngineSection {
            threshold: e.threshold,
            track_staleness: e.track_staleness,
            update_policy: e.update_policy,
            analytic: AnalyticParams::default(),
            grounding_rules: default_rules(),
        }
    }
}

impl EngineSection {
    pub fn engine_config(&self, matcher: Option<Matcher>) -> EngineConfig {
        EngineConfig {
            threshold: self.threshold,
            matcher: matcher.unwrap_or(Matcher::Analytic(self.analytic)),
            track_staleness: self.track_staleness,
            grounding_rules: self.grounding_rules.clone(),
            update_policy: self.update_policy,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub engine: EngineSection,
}

impl RunConfig {
    /// Reads `path` if given, then applies the seed override.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).map_err(|e| UsageError::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.sim.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.sim.validate()?;
        cfg.train.validate()?;
        cfg.engine.engine_config(None).validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form of the effective config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
