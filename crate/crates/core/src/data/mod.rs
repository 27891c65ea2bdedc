//! Dataset provisioning: a procedural synthetic multi-view generator with
//! exact geometry, CMU-Panoptic ingestion, and person-centered crop
//! sampling with horizontal-shift augmentation.

mod panoptic;
mod render;
mod sample;
mod synth;

pub use panoptic::{ingest_panoptic, map_19_to_17, IngestReport, PanopticPersonSpec, COCO19_TO_17};
pub use render::{Canvas, Rgb};
pub use synth::render_view;
pub use sample::{bilinear_sample, person_bbox, Dataset};
pub use synth::{ring_cameras, synth_scene, PersonAppearance, SynthConfig};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, Pose2d, Pose3d, Skeleton, COCO17_JOINT_NAMES, NUM_JOINTS};
use crate::models::{CropTransform, ImageTensor};

/// The two translation domains: the pair of filmed persons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersonId {
    A,
    B,
}

impl PersonId {
    pub fn key(self) -> &'static str {
        match self {
            PersonId::A => "a",
            PersonId::B => "b",
        }
    }

    pub fn other(self) -> PersonId {
        match self {
            PersonId::A => PersonId::B,
            PersonId::B => PersonId::A,
        }
    }
}

impl std::fmt::Display for PersonId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// One stored frame of one person: pose file plus one image per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: usize,
    pub pose: String,
    pub images: BTreeMap<String, String>,
}

/// Skeleton description embedded in the manifest so stored datasets are
/// self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub joint_names: Vec<String>,
    pub parent: Vec<Option<usize>>,
}

impl SkeletonSpec {
    pub fn coco17() -> Self {
        let skel = Skeleton::coco17();
        Self {
            joint_names: COCO17_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
            parent: skel.parent.to_vec(),
        }
    }

    pub fn to_skeleton(&self) -> Result<Skeleton> {
        if self.parent.len() != NUM_JOINTS {
            return Err(Error::InvalidSkeleton(format!(
                "manifest skeleton has {} joints, expected {NUM_JOINTS}",
                self.parent.len()
            )));
        }
        let mut parent = [None; NUM_JOINTS];
        parent.copy_from_slice(&self.parent);
        let skel = Skeleton { parent };
        skel.validate()?;
        Ok(skel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Panoptic,
}

/// Square person crop at `margin` times the 2D bounding box, resized to the
/// run resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropPolicy {
    pub margin: f64,
}

impl Default for CropPolicy {
    fn default() -> Self {
        Self { margin: 1.2 }
    }
}

/// Everything needed to load samples: cameras, per-person ordered sample
/// index, units, source and skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: DataSource,
    pub units: String,
    pub seed: Option<u64>,
    pub cameras: Vec<CameraView>,
    pub skeleton: SkeletonSpec,
    pub crop: CropPolicy,
    pub persons: BTreeMap<String, Vec<SampleRecord>>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.units != "cm" {
            return Err(Error::Dataset(format!("unsupported units {:?}", self.units)));
        }
        if self.cameras.len() < 2 {
            return Err(Error::Dataset(format!(
                "manifest needs at least 2 cameras, has {}",
                self.cameras.len()
            )));
        }
        for key in ["a", "b"] {
            let recs = self
                .persons
                .get(key)
                .ok_or_else(|| Error::Dataset(format!("person {key:?} missing from manifest")))?;
            if recs.is_empty() {
                return Err(Error::Dataset(format!("person {key:?} has no samples")));
            }
            for rec in recs {
                for view_id in rec.images.keys() {
                    if !self.cameras.iter().any(|c| &c.view_id == view_id) {
                        return Err(Error::Dataset(format!(
                            "sample t={} references unknown camera {view_id}",
                            rec.t
                        )));
                    }
                }
                for cam in &self.cameras {
                    if !rec.images.contains_key(&cam.view_id) {
                        return Err(Error::Dataset(format!(
                            "sample t={} missing image for camera {}",
                            rec.t, cam.view_id
                        )));
                    }
                }
            }
        }
        self.skeleton.to_skeleton()?;
        Ok(())
    }

    pub fn records(&self, person: PersonId) -> &[SampleRecord] {
        self.persons
            .get(person.key())
            .map(|v| v.as_slice())
            .expect("validated manifest has both persons")
    }

    pub fn num_frames(&self, person: PersonId) -> usize {
        self.records(person).len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Stored per-frame pose data: the 3D pose plus its exact projection into
/// every view (full-frame pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub pose3d: Pose3d,
    pub pose2d: BTreeMap<String, Pose2d>,
}

impl PoseFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// A synchronized multi-view training sample: per-view crops in camera
/// order, the ground-truth 3D pose (never transformed by augmentation), and
/// the crop-to-frame mapping per view.
#[derive(Debug, Clone)]
pub struct MultiViewSample {
    pub t: usize,
    pub person: PersonId,
    pub images: Vec<ImageTensor>,
    pub gt_pose: Pose3d,
    pub crop_transforms: Vec<CropTransform>,
    /// Ground-truth 2D joints in crop pixels (for detector training/eval).
    pub gt_pose2d_crop: Vec<Pose2d>,
}

/// Stateless augmentation context: the horizontal-shift RNG for each
/// (person, view) derives from these values, never from mutable state.
#[derive(Debug, Clone, Copy)]
pub struct AugmentSeed {
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
}

/// Temporal split: the last `holdout_frac` of frames per person are held
/// out for evaluation.
pub fn train_eval_split(n: usize, holdout_frac: f64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let eval = ((n as f64 * holdout_frac).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    let train_end = n - eval.min(n);
    (0..train_end, train_end..n)
}

pub fn resolve_path(manifest_dir: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_dir.join(p)
    }
}

/// Small camera/dataset builders shared by tests across the crate.
pub mod test_support {
    use super::*;

    pub fn ring_cameras(n: usize, frame_size: u32) -> Vec<CameraView> {
        synth::ring_cameras(n, frame_size, 350.0)
    }
}
