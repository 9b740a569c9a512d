use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_CROP;
use crate::providers::ProviderConfig;
use crate::representation::FusionConfig;

/// Pixel preprocessing before images reach a pixel-consuming encoder:
/// shorter side scaled up to `size` when smaller, then a centered square crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropConfig {
    pub size: u32,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self { size: DEFAULT_CROP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub crop: CropConfig,
    pub parallelism: usize,
    /// Abort on the first sample that fails instead of reporting it.
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::default(),
            fusion: FusionConfig::default(),
            train: TrainConfig::default(),
            crop: CropConfig::default(),
            parallelism: 1,
            strict: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.provider.validate()?;
        self.fusion.validate()?;
        self.train.validate()?;
        if self.crop.size == 0 {
            return Err(Error::InvalidConfig("crop size must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidConfig("parallelism must be >= 1".into()));
        }
        Ok(())
    }

    /// Sets the seed for both the synthetic provider and training.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.provider.seed = seed;
        self.train.seed = seed;
        self
    }

    /// SHA-256 of the JSON form, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
