use super::HarnessError;
use crate::attack::AttackConfig;
use crate::locnet::{Architecture, TrainConfig};
use crate::nav::{ApproachRegion, DriveConfig};
use crate::render::DatasetSampler;
use crate::world::{CityConfig, IntersectionId};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitySection {
    pub seed: u64,
    pub config: CityConfig,
}

impl Default for CitySection {
    fn default() -> Self {
        Self {
            seed: 7,
            config: CityConfig::default(),
        }
    }
}

/// Navigation plan `from -> turn_at -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub from: IntersectionId,
    pub turn_at: IntersectionId,
    pub to: IntersectionId,
}

impl Default for RouteSpec {
    fn default() -> Self {
        Self {
            from: IntersectionId::new(1, 0),
            turn_at: IntersectionId::new(1, 2),
            to: IntersectionId::new(2, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub sampler: DatasetSampler,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            sampler: DatasetSampler {
                count: 5556,
                ..Default::default()
            },
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub seed: u64,
    /// Test images that get an occlusion saliency map after training.
    pub saliency_samples: usize,
    pub saliency_block: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            seed: 1,
            saliency_samples: 1,
            saliency_block: 4,
        }
    }
}

/// Search over alternative approach regions when the default one does not separate the
/// adversarial patch from the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionScan {
    pub enabled: bool,
    pub min_gap: f64,
    pub step: f64,
}

impl Default for RegionScan {
    fn default() -> Self {
        Self {
            enabled: true,
            min_gap: 20.0,
            step: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Where artifacts go; not part of any stage hash.
    pub output_dir: PathBuf,
    pub city: CitySection,
    pub route: RouteSpec,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub drive: DriveConfig,
    pub region: ApproachRegion,
    /// Seed of the uniform random baseline patch.
    pub random_patch_seed: u64,
    pub region_scan: RegionScan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("experiment"),
            city: CitySection::default(),
            route: RouteSpec::default(),
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            attack: AttackConfig::default(),
            drive: DriveConfig::default(),
            region: ApproachRegion::default(),
            random_patch_seed: 99,
            region_scan: RegionScan::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |stage: &str, msg: String| HarnessError::Config(format!("{stage}: {msg}"));
        self.city.config.validate().map_err(|e| bad("city", e.to_string()))?;
        self.dataset.sampler.validate().map_err(|e| bad("dataset", e.to_string()))?;
        self.model.architecture.validate().map_err(|e| bad("model", e.to_string()))?;
        self.train.validate().map_err(|e| bad("train", e.to_string()))?;
        self.attack.validate().map_err(|e| bad("attack", e.to_string()))?;
        self.drive.validate().map_err(|e| bad("drive", e.to_string()))?;
        self.region.validate().map_err(|e| bad("region", e.to_string()))?;
        if self.model.architecture.input_size != self.dataset.sampler.image_size {
            return Err(bad(
                "model",
                "architecture input size differs from the dataset image size".into(),
            ));
        }
        if self.region_scan.enabled && !(self.region_scan.step > 0.0 && self.region_scan.min_gap > 0.0) {
            return Err(bad("region_scan", "step and gap must be positive".into()));
        }
        Ok(())
    }
}
