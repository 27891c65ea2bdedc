//! CMU-Panoptic ingestion: calibration JSON, 19-keypoint skeleton series,
//! and per-camera frame directories, mapped into the dataset manifest used
//! everywhere else. World units are centimeters, matching the rest of the
//! pipeline.
//!
//! Expected layout under the sequence root:
//!   calibration_{seq}.json
//!   hdPose3d_stage1_coco19/body3DScene_{frame:08d}.json
//!   hdImgs/{cam}/{cam}_{frame:08d}.jpg (or .png)

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::data::{
    CropPolicy, DataSource, DatasetManifest, PersonId, PoseFile, SampleRecord, SkeletonSpec,
};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraView, Pose3d, NUM_JOINTS};

/// Source indices in the Panoptic `coco19` joint order for each COCO-17
/// joint (our order: nose, eyes, ears, shoulders, elbows, wrists, hips,
/// knees, ankles). The two dropped Panoptic joints are 0 (neck) and
/// 2 (body center), which have no COCO-17 counterpart.
pub const COCO19_TO_17: [usize; NUM_JOINTS] = [
    1,  // nose
    15, // left_eye
    17, // right_eye
    16, // left_ear
    18, // right_ear
    3,  // left_shoulder
    9,  // right_shoulder
    4,  // left_elbow
    10, // right_elbow
    5,  // left_wrist
    11, // right_wrist
    6,  // left_hip
    12, // right_hip
    7,  // left_knee
    13, // right_knee
    8,  // left_ankle
    14, // right_ankle
];

/// Selects and reorders the 17 COCO joints from a 19-joint Panoptic pose
/// given as (x, y, z, confidence) tuples; joints with confidence <= 0 stay
/// invalid.
pub fn map_19_to_17(joints19: &[[f64; 4]]) -> Result<Pose3d> {
    if joints19.len() != 19 {
        return Err(Error::ShapeMismatch(format!(
            "expected 19 joints, got {}",
            joints19.len()
        )));
    }
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    let mut valid = [false; NUM_JOINTS];
    for (dst, &src) in COCO19_TO_17.iter().enumerate() {
        let j = joints19[src];
        if j[3] > 0.0 && j[..3].iter().all(|v| v.is_finite()) {
            joints[dst] = [j[0], j[1], j[2]];
            valid[dst] = true;
        }
    }
    Pose3d::new(joints, valid)
}

/// Which Panoptic body id plays which role.
#[derive(Debug, Clone)]
pub struct PanopticPersonSpec {
    pub person: PersonId,
    pub body_id: i64,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct IngestReport {
    pub frames_used: usize,
    pub dropped_missing_view: usize,
    pub dropped_missing_pose: usize,
    /// Fraction of valid GT joints whose reprojection lands inside the
    /// image bounds of the chosen cameras.
    pub reprojection_in_bounds: f64,
}

#[derive(Deserialize)]
struct CalibFile {
    cameras: Vec<CalibCamera>,
}

#[derive(Deserialize)]
struct CalibCamera {
    name: String,
    #[serde(rename = "type", default)]
    kind: Option<String>,
    resolution: [u32; 2],
    #[serde(rename = "K")]
    k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    #[serde(rename = "t")]
    t: [[f64; 1]; 3],
}

#[derive(Deserialize)]
struct SceneFile {
    bodies: Vec<SceneBody>,
}

#[derive(Deserialize)]
struct SceneBody {
    id: i64,
    joints19: Vec<f64>,
}

fn find_calibration(root: &Path) -> Result<std::path::PathBuf> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut candidates: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("calibration_") && n.ends_with(".json"))
        })
        .collect();
    candidates.sort();
    candidates.into_iter().next().ok_or_else(|| {
        Error::Dataset(format!(
            "no calibration_*.json found under {}",
            root.display()
        ))
    })
}

fn parse_cameras(root: &Path, camera_ids: &[String]) -> Result<Vec<CameraView>> {
    let calib_path = find_calibration(root)?;
    let text = std::fs::read_to_string(&calib_path).map_err(|e| Error::io(&calib_path, e))?;
    let calib: CalibFile =
        serde_json::from_str(&text).map_err(|e| Error::json(&calib_path, e))?;
    camera_ids
        .iter()
        .map(|id| {
            let cam = calib
                .cameras
                .iter()
                .find(|c| &c.name == id)
                .ok_or_else(|| Error::MissingCamera(id.clone()))?;
            if let Some(kind) = &cam.kind {
                if kind != "hd" {
                    return Err(Error::Dataset(format!(
                        "camera {id} is type {kind:?}, only hd cameras are supported"
                    )));
                }
            }
            let k = Matrix3::from_fn(|r, c| cam.k[r][c]);
            let r = Matrix3::from_fn(|i, j| cam.r[i][j]);
            let t = Vector3::new(cam.t[0][0], cam.t[1][0], cam.t[2][0]);
            CameraView::from_krt(id.clone(), &k, &r, &t, (cam.resolution[0], cam.resolution[1]))
        })
        .collect()
}

fn frame_index_of(name: &str) -> Option<usize> {
    // body3DScene_{frame:08d}.json
    let stem = name.strip_prefix("body3DScene_")?.strip_suffix(".json")?;
    stem.parse().ok()
}

fn find_frame_image(root: &Path, cam: &str, frame: usize) -> Option<String> {
    for ext in ["jpg", "png", "jpeg"] {
        let rel = format!("hdImgs/{cam}/{cam}_{frame:08}.{ext}");
        if root.join(&rel).is_file() {
            return Some(rel);
        }
    }
    None
}

/// Parses calibration and skeleton series for the chosen cameras, converts
/// 19-joint skeletons to COCO-17, pairs synchronized frames across views by
/// index, and emits a manifest (image paths relative to `root`). Frames
/// missing a view or a body are dropped and counted in the report.
pub fn ingest_panoptic(
    root: &Path,
    camera_ids: &[String],
    persons: &[PanopticPersonSpec],
) -> Result<(DatasetManifest, IngestReport)> {
    if camera_ids.len() < 2 {
        return Err(Error::Config(format!(
            "panoptic ingest needs at least 2 cameras, got {}",
            camera_ids.len()
        )));
    }
    let spec_a = persons
        .iter()
        .find(|s| s.person == PersonId::A)
        .ok_or_else(|| Error::Config("no body id mapped to person a".into()))?;
    let spec_b = persons
        .iter()
        .find(|s| s.person == PersonId::B)
        .ok_or_else(|| Error::Config("no body id mapped to person b".into()))?;

    let cameras = parse_cameras(root, camera_ids)?;

    let pose_dir = root.join("hdPose3d_stage1_coco19");
    let entries = std::fs::read_dir(&pose_dir).map_err(|e| Error::io(&pose_dir, e))?;
    let mut frames: Vec<usize> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| frame_index_of(e.file_name().to_str()?))
        .collect();
    frames.sort_unstable();
    if frames.is_empty() {
        return Err(Error::Dataset(format!(
            "no body3DScene_*.json files under {}",
            pose_dir.display()
        )));
    }

    let mut report = IngestReport::default();
    let mut persons_out: BTreeMap<String, Vec<SampleRecord>> = BTreeMap::new();
    let poses_out = root.join("mvpt_poses");
    std::fs::create_dir_all(&poses_out).map_err(|e| Error::io(&poses_out, e))?;

    let mut joints_in_bounds = 0usize;
    let mut joints_total = 0usize;

    for spec in [spec_a, spec_b] {
        let mut records = Vec::new();
        for &frame in &frames {
            let scene_path = pose_dir.join(format!("body3DScene_{frame:08}.json"));
            let text = std::fs::read_to_string(&scene_path).map_err(|e| Error::io(&scene_path, e))?;
            let scene: SceneFile =
                serde_json::from_str(&text).map_err(|e| Error::json(&scene_path, e))?;
            let Some(body) = scene.bodies.iter().find(|b| b.id == spec.body_id) else {
                report.dropped_missing_pose += 1;
                continue;
            };
            if body.joints19.len() != 19 * 4 {
                return Err(Error::Dataset(format!(
                    "malformed skeleton in {}: {} values for body {}",
                    scene_path.display(),
                    body.joints19.len(),
                    body.id
                )));
            }
            let mut joints19 = [[0.0; 4]; 19];
            for (j, chunk) in body.joints19.chunks_exact(4).enumerate() {
                joints19[j] = [chunk[0], chunk[1], chunk[2], chunk[3]];
            }
            let pose = map_19_to_17(&joints19)?;
            if pose.is_empty() {
                report.dropped_missing_pose += 1;
                continue;
            }

            let mut images = BTreeMap::new();
            let mut complete = true;
            for cam in camera_ids {
                match find_frame_image(root, cam, frame) {
                    Some(rel) => {
                        images.insert(cam.clone(), rel);
                    }
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if !complete {
                report.dropped_missing_view += 1;
                continue;
            }

            let mut pose2d = BTreeMap::new();
            for cam in &cameras {
                let p2 = project(&pose, cam)?;
                for (p, &c) in p2.points.iter().zip(&p2.confidence) {
                    if c > 0.0 {
                        joints_total += 1;
                        let (w, h) = cam.image_size;
                        if p[0] >= 0.0 && p[0] < w as f64 && p[1] >= 0.0 && p[1] < h as f64 {
                            joints_in_bounds += 1;
                        }
                    }
                }
                pose2d.insert(cam.view_id.clone(), p2);
            }
            let pose_rel = format!("mvpt_poses/{}_{frame:08}.json", spec.person.key());
            PoseFile {
                pose3d: pose,
                pose2d,
            }
            .save(&root.join(&pose_rel))?;
            records.push(SampleRecord {
                t: records.len(),
                pose: pose_rel,
                images,
            });
        }
        if records.is_empty() {
            return Err(Error::Dataset(format!(
                "no usable frames for person {} (body id {})",
                spec.person, spec.body_id
            )));
        }
        report.frames_used += records.len();
        persons_out.insert(spec.person.key().to_string(), records);
    }

    report.reprojection_in_bounds = if joints_total == 0 {
        0.0
    } else {
        joints_in_bounds as f64 / joints_total as f64
    };

    let manifest = DatasetManifest {
        source: DataSource::Panoptic,
        units: "cm".into(),
        seed: None,
        cameras,
        skeleton: SkeletonSpec::coco17(),
        crop: CropPolicy::default(),
        persons: persons_out,
    };
    manifest.validate()?;
    Ok((manifest, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_is_injective_and_drops_neck_and_body_center() {
        let mut seen = std::collections::BTreeSet::new();
        for &src in &COCO19_TO_17 {
            assert!(seen.insert(src), "duplicate source index {src}");
            assert!(src < 19);
        }
        assert!(!seen.contains(&0), "neck must be dropped");
        assert!(!seen.contains(&2), "body center must be dropped");
        assert_eq!(seen.len(), 17);
    }

    #[test]
    fn mapping_places_joints_by_name() {
        // Encode the source index into the x coordinate and check the
        // destination ordering matches the COCO-17 list.
        let joints19: Vec<[f64; 4]> = (0..19).map(|i| [i as f64, 0.0, 0.0, 1.0]).collect();
        let pose = map_19_to_17(&joints19).unwrap();
        assert_eq!(pose.joints[0][0], 1.0); // nose from panoptic index 1
        assert_eq!(pose.joints[1][0], 15.0); // left_eye
        assert_eq!(pose.joints[5][0], 3.0); // left_shoulder
        assert_eq!(pose.joints[12][0], 12.0); // right_hip
        assert_eq!(pose.joints[16][0], 14.0); // right_ankle
        assert!(pose.valid.iter().all(|v| *v));
    }

    #[test]
    fn negative_confidence_joints_become_invalid() {
        let mut joints19: Vec<[f64; 4]> = (0..19).map(|i| [i as f64, 0.0, 0.0, 1.0]).collect();
        joints19[5][3] = -1.0; // left wrist missing
        let pose = map_19_to_17(&joints19).unwrap();
        assert!(!pose.valid[9]);
        assert_eq!(pose.num_valid(), 16);
    }

    #[test]
    fn wrong_arity_is_an_error() {
        let joints: Vec<[f64; 4]> = (0..17).map(|_| [0.0; 4]).collect();
        assert!(map_19_to_17(&joints).is_err());
    }
}
