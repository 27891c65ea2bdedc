//! Quantitative counterparts of the qualitative claims: pose preservation
//! (MPJPE of estimated fake-tuple poses against the proportion-scaled source
//! ground truth) and cross-view consistency (reprojection residual of
//! independently detected per-view 2D poses against their own triangulation).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::PersonId;
use crate::error::{Error, Result};
use crate::geometry::{
    project, scale_pose, smooth_mse, triangulate_pose, CameraView, Pose2d, Pose3d, NUM_JOINTS,
};
use crate::models::{CropTransform, ImageTensor, KeypointDetector};
use crate::trainer::Trainer;

/// Mean per-joint Euclidean distance over jointly valid joints, in run
/// units (centimeters).
pub fn mpjpe(pred: &Pose3d, reference: &Pose3d) -> Result<f64> {
    let (sum, n) = mpjpe_accumulate(pred, reference)?;
    Ok(sum / n as f64)
}

fn mpjpe_accumulate(pred: &Pose3d, reference: &Pose3d) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..NUM_JOINTS {
        if pred.valid[j] && reference.valid[j] {
            let mut d = 0.0;
            for c in 0..3 {
                let e = pred.joints[j][c] - reference.joints[j][c];
                d += e * e;
            }
            sum += d.sqrt();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedDistance);
    }
    Ok((sum, n))
}

/// Per-view detections in full-frame pixels, plus confidences.
fn detect_views(
    detector: &KeypointDetector<f32>,
    images: &[&ImageTensor],
    crops: &[CropTransform],
) -> Result<Vec<Pose2d>> {
    let mut out = Vec::with_capacity(images.len());
    for (img, crop) in images.iter().zip(crops) {
        let mut g: Graph<f32> = Graph::new();
        let bound = detector.params.bind(&mut g, false);
        let image = img.to_graph(&mut g);
        let det = detector.detect(&mut g, &bound, image);
        let mut points = Vec::with_capacity(NUM_JOINTS);
        let mut conf = Vec::with_capacity(NUM_JOINTS);
        for j in 0..NUM_JOINTS {
            let px = crop.crop_to_frame([
                g.value(det.xs)[[j]] as f64,
                g.value(det.ys)[[j]] as f64,
            ]);
            points.push(px);
            conf.push((g.value(det.conf)[[j]] as f64).clamp(0.0, 1.0));
        }
        out.push(Pose2d::new(points, conf)?);
    }
    Ok(out)
}

/// Pose estimate from a fake multi-view tuple (inference-only path).
pub fn estimate_from_images(
    detector: &KeypointDetector<f32>,
    images: &[&ImageTensor],
    cameras: &[CameraView],
    crops: &[CropTransform],
) -> Result<(Pose3d, Vec<Pose2d>)> {
    if images.len() < 2 {
        return Err(Error::InsufficientViews { got: images.len() });
    }
    let detections = detect_views(detector, images, crops)?;
    let per_view: Vec<(&CameraView, &Pose2d)> =
        cameras.iter().zip(detections.iter().map(|d| d)).collect();
    let pose = triangulate_pose(&per_view)?;
    Ok((pose, detections))
}

/// Cross-view consistency of a generated tuple: detect 2D keypoints per view
/// independently, triangulate, reproject, and return the confidence-weighted
/// mean pixel residual between detections and reprojections.
pub fn view_consistency(
    detector: &KeypointDetector<f32>,
    images: &[&ImageTensor],
    cameras: &[CameraView],
    crops: &[CropTransform],
) -> Result<f64> {
    let (pose, detections) = estimate_from_images(detector, images, cameras, crops)?;
    let mut weighted = 0.0;
    let mut total_w = 0.0;
    for (cam, det) in cameras.iter().zip(&detections) {
        let reproj = project(&pose, cam)?;
        for j in 0..NUM_JOINTS {
            if !pose.valid[j] {
                continue;
            }
            let w = det.confidence[j];
            if w <= 0.0 {
                continue;
            }
            let dx = det.points[j][0] - reproj.points[j][0];
            let dy = det.points[j][1] - reproj.points[j][1];
            weighted += w * (dx * dx + dy * dy).sqrt();
            total_w += w;
        }
    }
    if total_w <= 0.0 {
        return Err(Error::UndefinedDistance);
    }
    Ok(weighted / total_w)
}

/// One evaluated held-out frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEval {
    pub source: PersonId,
    pub t: usize,
    pub mpjpe_cm: f64,
    pub residual_px: f64,
    pub l3d: f64,
}

/// Aggregated evaluation of one checkpoint over the held-out split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mpjpe_cm: f64,
    pub per_joint_error: Vec<f64>,
    pub cross_view_residual_px: f64,
    pub n_samples: usize,
    pub run_id: String,
    pub baseline: bool,
    pub config_hash: String,
    pub frames: Vec<FrameEval>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Translates every held-out source frame in both directions, estimates the
/// 3D pose of each fake tuple, and aggregates MPJPE against the scaled
/// source ground truth plus the cross-view residual. Deterministic given
/// the trainer state and split.
pub fn evaluate_run(trainer: &Trainer<f32>, run_id: &str, baseline: bool) -> Result<EvalReport> {
    let models = &trainer.models;
    let dataset = &trainer.dataset;
    let skeleton = dataset.skeleton();
    let mut frames = Vec::new();
    let mut joint_sum = vec![0.0; NUM_JOINTS];
    let mut joint_n = vec![0usize; NUM_JOINTS];
    let mut dist_sum = 0.0;
    let mut dist_n = 0usize;
    let mut residual_sum = 0.0;

    for source in [PersonId::A, PersonId::B] {
        let target_profile = match source {
            PersonId::A => &trainer.profile_b,
            PersonId::B => &trainer.profile_a,
        };
        for t in trainer.eval_range(source) {
            let sample = dataset.sample(source, t, trainer.cfg.resolution, None)?;
            let fakes: Vec<ImageTensor> = models
                .views
                .iter()
                .enumerate()
                .map(|(vi, view)| {
                    let gen = match source {
                        PersonId::A => &view.gen_to_b,
                        PersonId::B => &view.gen_to_a,
                    };
                    models.translate(gen, &sample.images[trainer.cam_index(vi)])
                })
                .collect::<Result<_>>()?;
            let fake_refs: Vec<&ImageTensor> = fakes.iter().collect();
            let crops: Vec<CropTransform> = (0..models.views.len())
                .map(|vi| sample.crop_transforms[trainer.cam_index(vi)])
                .collect();
            let (est, _) =
                estimate_from_images(&models.detector, &fake_refs, &models.cameras, &crops)?;
            let scaled = scale_pose(&sample.gt_pose, skeleton, target_profile)?;
            let (sum, n) = mpjpe_accumulate(&est, &scaled)?;
            for j in 0..NUM_JOINTS {
                if est.valid[j] && scaled.valid[j] {
                    let mut d = 0.0;
                    for c in 0..3 {
                        let e = est.joints[j][c] - scaled.joints[j][c];
                        d += e * e;
                    }
                    joint_sum[j] += d.sqrt();
                    joint_n[j] += 1;
                }
            }
            let residual =
                view_consistency(&models.detector, &fake_refs, &models.cameras, &crops)?;
            let l3d = smooth_mse(&scaled, &est, trainer.weights.epsilon)?;
            frames.push(FrameEval {
                source,
                t,
                mpjpe_cm: sum / n as f64,
                residual_px: residual,
                l3d,
            });
            dist_sum += sum;
            dist_n += n;
            residual_sum += residual;
        }
    }
    if frames.is_empty() {
        return Err(Error::Dataset("empty evaluation split".into()));
    }
    Ok(EvalReport {
        mpjpe_cm: dist_sum / dist_n as f64,
        per_joint_error: joint_sum
            .iter()
            .zip(&joint_n)
            .map(|(s, n)| if *n > 0 { s / *n as f64 } else { f64::NAN })
            .collect(),
        cross_view_residual_px: residual_sum / frames.len() as f64,
        n_samples: frames.len(),
        run_id: run_id.to_string(),
        baseline,
        config_hash: trainer.config_hash.clone(),
        frames,
    })
}

/// Per-frame comparison grids: rows {real, joint fake, baseline fake},
/// columns the views, one PNG per requested held-out frame and direction.
pub fn render_comparison(
    joint: &Trainer<f32>,
    baseline: &Trainer<f32>,
    frames: &[usize],
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let res = joint.cfg.resolution;
    let n_views = joint.models.views.len();
    let mut written = Vec::new();
    for source in [PersonId::A, PersonId::B] {
        let eval_range = joint.eval_range(source);
        for &t in frames {
            if !eval_range.contains(&t) {
                return Err(Error::FrameOutOfRange {
                    t,
                    len: eval_range.end,
                });
            }
            let sample = joint.dataset.sample(source, t, res, None)?;
            let mut rows: Vec<Vec<ImageTensor>> = vec![Vec::new(), Vec::new(), Vec::new()];
            for vi in 0..n_views {
                let real = sample.images[joint.cam_index(vi)].clone();
                let fake_joint = {
                    let view = &joint.models.views[vi];
                    let gen = match source {
                        PersonId::A => &view.gen_to_b,
                        PersonId::B => &view.gen_to_a,
                    };
                    joint.models.translate(gen, &real)?
                };
                let fake_base = {
                    let view = &baseline.models.views[vi];
                    let gen = match source {
                        PersonId::A => &view.gen_to_b,
                        PersonId::B => &view.gen_to_a,
                    };
                    baseline.models.translate(gen, &real)?
                };
                rows[0].push(real);
                rows[1].push(fake_joint);
                rows[2].push(fake_base);
            }
            let mut grid = vec![0u8; 3 * res * n_views * res * 3];
            let grid_w = n_views * res;
            for (ri, row) in rows.iter().enumerate() {
                for (ci, img) in row.iter().enumerate() {
                    let rgb = img.to_rgb8();
                    for y in 0..res {
                        for x in 0..res {
                            let src = (y * res + x) * 3;
                            let dst = ((ri * res + y) * grid_w + ci * res + x) * 3;
                            grid[dst..dst + 3].copy_from_slice(&rgb[src..src + 3]);
                        }
                    }
                }
            }
            let direction = match source {
                PersonId::A => "a_to_b",
                PersonId::B => "b_to_a",
            };
            let path = out_dir.join(format!("compare_{direction}_{t:05}.png"));
            image::save_buffer(
                &path,
                &grid,
                grid_w as u32,
                (3 * res) as u32,
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| Error::image(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
