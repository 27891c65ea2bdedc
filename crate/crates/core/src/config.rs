//! The run configuration file: one TOML document with `data`, `model`,
//! `loss`, `train` and `eval` sections. Unknown keys are rejected; every
//! field has a documented default; the canonical-serialization hash is
//! stamped into every artifact a run emits.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::CropPolicy;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::{DetectorConfig, DiscriminatorConfig, GeneratorConfig, ModelConfig};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub views: usize,
    pub frames: usize,
    pub frame_size: u32,
    pub camera_radius_cm: f64,
    pub crop_margin: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = crate::data::SynthConfig::default();
        Self {
            views: d.views,
            frames: d.frames,
            frame_size: d.frame_size,
            camera_radius_cm: d.camera_radius_cm,
            crop_margin: d.crop.margin,
        }
    }
}

impl SynthSection {
    pub fn to_synth_config(&self) -> crate::data::SynthConfig {
        crate::data::SynthConfig {
            views: self.views,
            frames: self.frames,
            frame_size: self.frame_size,
            camera_radius_cm: self.camera_radius_cm,
            crop: CropPolicy {
                margin: self.crop_margin,
            },
            ..crate::data::SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanopticSection {
    /// Sequence root (contains calibration_*.json etc.).
    pub root: PathBuf,
    pub cameras: Vec<String>,
    pub body_a: i64,
    pub body_b: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Path to a dataset manifest.json (relative paths resolve against
    /// MVPT_DATA_ROOT when that is set).
    pub manifest: Option<PathBuf>,
    pub synth: SynthSection,
    pub panoptic: Option<PanopticSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub gen_base_channels: usize,
    pub gen_res_blocks: usize,
    pub gen_head_kernel: usize,
    pub disc_base_channels: usize,
    pub det_base_channels: usize,
    pub softargmax_temperature: f64,
    pub det_pretrain_epochs: usize,
    pub det_pretrain_lr: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        let d = DiscriminatorConfig::default();
        let det = DetectorConfig::default();
        let pre = crate::trainer::DetectorPretrainConfig::default();
        Self {
            gen_base_channels: g.base_channels,
            gen_res_blocks: g.res_blocks,
            gen_head_kernel: g.head_kernel,
            disc_base_channels: d.base_channels,
            det_base_channels: det.base_channels,
            softargmax_temperature: det.temperature,
            det_pretrain_epochs: pre.epochs,
            det_pretrain_lr: pre.lr,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, resolution: usize) -> ModelConfig {
        ModelConfig {
            resolution,
            generator: GeneratorConfig {
                base_channels: self.gen_base_channels,
                res_blocks: self.gen_res_blocks,
                head_kernel: self.gen_head_kernel,
            },
            discriminator: DiscriminatorConfig {
                base_channels: self.disc_base_channels,
            },
            detector: DetectorConfig {
                base_channels: self.det_base_channels,
                temperature: self.softargmax_temperature,
            },
        }
    }

    pub fn pretrain_config(&self) -> crate::trainer::DetectorPretrainConfig {
        crate::trainer::DetectorPretrainConfig {
            epochs: self.det_pretrain_epochs,
            lr: self.det_pretrain_lr,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Frames (held-out indices) for comparison grids.
    pub compare_frames: Vec<usize>,
}

/// The whole run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub data: DataSection,
    pub model: ModelSection,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfigFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate(&self.loss)?;
        if self.data.synth.views < 2 {
            return Err(Error::Config(format!(
                "data.synth.views must be >= 2, got {}",
                self.data.synth.views
            )));
        }
        if self.model.gen_base_channels == 0 || self.model.det_base_channels == 0 {
            return Err(Error::Config("model channel widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Hash of the canonical serialization: stable under comment and
    /// key-order differences in the source file.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolves the dataset manifest path, honoring MVPT_DATA_ROOT for
    /// relative paths.
    pub fn manifest_path(&self) -> Result<PathBuf> {
        let p = self.data.manifest.clone().ok_or_else(|| {
            Error::Config("data.manifest is not set (point it at a dataset manifest.json)".into())
        })?;
        if p.is_absolute() {
            return Ok(p);
        }
        match std::env::var_os("MVPT_DATA_ROOT") {
            Some(root) => Ok(PathBuf::from(root).join(p)),
            None => Ok(p),
        }
    }
}
