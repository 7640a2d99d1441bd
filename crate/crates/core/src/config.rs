//! Run configuration file (TOML). Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{DefenseConfig, RewardWeights};
use crate::env::Scenario;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::jammers::{JammerKind, JammerRewardWeights, JammerSpec};
use crate::learner::TrainConfig;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointPaths {
    pub uav: Option<PathBuf>,
    pub jammer: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub world: WorldConfig,
    /// The real jammer. `kind = "none"` leaves the world clean.
    pub jammer: JammerSpec,
    pub defense: DefenseConfig,
    pub weights: RewardWeights,
    pub jammer_weights: JammerRewardWeights,
    pub features: FeatureConfig,
    /// Typical-UAV learner.
    pub train: TrainConfig,
    /// Jammer learner.
    pub jammer_train: TrainConfig,
    pub checkpoints: CheckpointPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            world: WorldConfig::default(),
            jammer: JammerSpec::none(),
            defense: DefenseConfig::default(),
            weights: RewardWeights::default(),
            jammer_weights: JammerRewardWeights::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            jammer_train: TrainConfig {
                hidden: vec![256, 128],
                ..TrainConfig::default()
            },
            checkpoints: CheckpointPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_default();
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    /// Every field materialized, defaults included.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config("<echo>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?;
        self.defense.validate()?;
        self.train.validate().map_err(|e| prefix(e, "train"))?;
        self.jammer_train.validate().map_err(|e| prefix(e, "jammer_train"))?;
        Ok(())
    }

    /// Evaluation world: the configured world plus the real jammer.
    pub fn world_with_jammer(&self) -> WorldConfig {
        let mut w = self.world.clone();
        if self.jammer.kind != JammerKind::None {
            w.jammers.push(self.jammer.clone());
        }
        w
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let world = self.world_with_jammer();
        world.validate()?;
        Ok(Scenario {
            world,
            defense: self.defense,
            weights: self.weights,
            jammer_weights: self.jammer_weights,
            features: self.features,
        })
    }
}

fn prefix(e: Error, section: &str) -> Error {
    match e {
        Error::Config { field, message } if field.starts_with("train.") => Error::Config {
            field: format!("{section}{}", &field["train".len()..]),
            message,
        },
        other => other,
    }
}
