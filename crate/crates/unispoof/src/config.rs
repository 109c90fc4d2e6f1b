//! Run configuration: a JSON file, overridden by command-line flags and
//! echoed into every run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unispoof_core::augment::AugmentSpec;
use unispoof_core::model::ModelConfig;
use unispoof_core::synth::DatasetSpec;
use unispoof_core::train::TrainConfig;

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

/// A preset name or a full inline model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(String),
    Inline(ModelConfig),
}

impl ModelChoice {
    pub fn resolve(&self) -> Result<ModelConfig> {
        match self {
            ModelChoice::Preset(name) => ModelConfig::preset(name).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown preset {name:?} (expected swin-desk or swin-base-paper)"
                ))
            }),
            ModelChoice::Inline(m) => Ok(m.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub genuine: usize,
    pub impostor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelChoice,
    pub dataset: DatasetSpec,
    pub augment: AugmentSpec,
    pub frm: TrainConfig,
    pub uad: TrainConfig,
    /// Verification pairs drawn from the test split.
    pub pairs: PairSpec,
    /// Chunk size for inference-only passes.
    pub eval_batch: usize,
    /// Copied into the dataset and both training configs.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_VERSION,
            model: ModelChoice::Preset("swin-desk".into()),
            dataset: DatasetSpec::default(),
            augment: AugmentSpec::default(),
            frm: TrainConfig::desk_frm(),
            uad: TrainConfig::desk_uad(),
            pairs: PairSpec {
                genuine: 100,
                impostor: 100,
            },
            eval_batch: 32,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
        if cfg.schema_version != CONFIG_VERSION {
            return Err(CliError::format(
                path,
                format!("schema_version {} is not {CONFIG_VERSION}", cfg.schema_version),
            ));
        }
        Ok(cfg)
    }

    /// Pushes the global seed into the sub-configurations.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.seed = seed;
        self.frm.seed = seed;
        self.uad.seed = seed;
        self
    }

    /// Resolves the preset and checks that all parts fit together.
    pub fn validate(&self) -> Result<ModelConfig> {
        let model = self.model.resolve()?;
        model.validate()?;
        self.dataset.validate()?;
        self.augment.validate()?;
        self.frm.validate(&model)?;
        self.uad.validate(&model)?;
        if self.dataset.image_size != model.backbone.image_size {
            return Err(CliError::Usage(format!(
                "dataset image_size {} does not match the model input {}",
                self.dataset.image_size, model.backbone.image_size
            )));
        }
        if self.eval_batch == 0 {
            return Err(CliError::Usage("eval_batch must be at least 1".into()));
        }
        Ok(model)
    }

    /// The same configuration with the model written out in full.
    pub fn resolved(&self) -> Result<Self> {
        Ok(Self {
            model: ModelChoice::Inline(self.model.resolve()?),
            ..self.clone()
        })
    }
}

/// Default run directory for a subcommand.
pub fn default_out(command: &str) -> PathBuf {
    Path::new("runs").join(command)
}
