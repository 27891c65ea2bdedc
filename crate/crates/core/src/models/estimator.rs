//! The frozen multi-view 3D pose estimator: per-view keypoint detection,
//! crop-to-frame coordinate mapping, and confidence-weighted triangulation,
//! differentiable end-to-end w.r.t. the input images.

use ndarray::ArrayD;

use crate::autodiff::{Graph, Scalar, Tid, ViewObservation};
use crate::error::{Error, Result};
use crate::geometry::{CameraView, Pose3d, NUM_JOINTS};
use crate::models::detector::{Detection, KeypointDetector};
use crate::models::params::Bound;

/// Affine crop-pixel -> full-frame-pixel mapping (uniform scale plus offset),
/// stored with every sample so triangulation sees calibrated coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CropTransform {
    pub scale: f64,
    pub offset: [f64; 2],
}

impl CropTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: [0.0, 0.0],
        }
    }

    pub fn crop_to_frame(&self, px: [f64; 2]) -> [f64; 2] {
        [
            px[0] * self.scale + self.offset[0],
            px[1] * self.scale + self.offset[1],
        ]
    }

    pub fn frame_to_crop(&self, px: [f64; 2]) -> [f64; 2] {
        [
            (px[0] - self.offset[0]) / self.scale,
            (px[1] - self.offset[1]) / self.scale,
        ]
    }
}

/// Differentiable multi-view pose estimate on the tape.
pub struct EstimatedPose {
    /// (J, 3) world-space joints.
    pub joints: Tid,
    pub valid: Vec<bool>,
    pub per_view: Vec<Detection>,
}

impl EstimatedPose {
    /// Materializes the tape value as a plain pose.
    pub fn to_pose3d<T: Scalar>(&self, g: &Graph<T>) -> Result<Pose3d> {
        let v = g.value(self.joints);
        let mut joints = [[0.0; 3]; NUM_JOINTS];
        let mut valid = [false; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            for c in 0..3 {
                joints[j][c] = v[[j, c]].cast_f64();
            }
            valid[j] = self.valid[j];
        }
        if !valid.iter().any(|v| *v) {
            return Err(Error::EmptyPose);
        }
        Pose3d::new(joints, valid)
    }
}

/// Images (as tape tensors) -> 3D pose, differentiable w.r.t. the images.
/// The detector weights bind as constants when `bound` was created frozen,
/// which is how the translation trainer uses it.
pub fn estimate_pose<T: Scalar>(
    g: &mut Graph<T>,
    detector: &KeypointDetector<T>,
    bound: &Bound,
    images: &[Tid],
    cameras: &[CameraView],
    crops: &[CropTransform],
) -> Result<EstimatedPose> {
    if images.len() != cameras.len() || images.len() != crops.len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate_pose: {} images, {} cameras, {} crop transforms",
            images.len(),
            cameras.len(),
            crops.len()
        )));
    }
    if images.len() < 2 {
        return Err(Error::InsufficientViews { got: images.len() });
    }
    let mut per_view = Vec::with_capacity(images.len());
    let mut observations = Vec::with_capacity(images.len());
    for ((image, camera), crop) in images.iter().zip(cameras).zip(crops) {
        let det = detector.detect(g, bound, *image);
        // Crop pixels -> full-frame pixels (uniform affine).
        let s = T::cast_from(crop.scale);
        let sx = g.scale(det.xs, s);
        let xs = g.add_scalar(sx, T::cast_from(crop.offset[0]));
        let sy = g.scale(det.ys, s);
        let ys = g.add_scalar(sy, T::cast_from(crop.offset[1]));
        let mut projection = [[0.0; 4]; 3];
        for r in 0..3 {
            for c in 0..4 {
                projection[r][c] = camera.projection[(r, c)];
            }
        }
        observations.push(ViewObservation {
            xs,
            ys,
            conf: det.conf,
            projection,
        });
        per_view.push(det);
    }
    let (joints, valid) = g.triangulate(&observations);
    if !valid.iter().any(|v| *v) {
        return Err(Error::EmptyPose);
    }
    Ok(EstimatedPose {
        joints,
        valid,
        per_view,
    })
}

/// Scaled ground-truth pose as a constant (J, 3) target array for the 3D
/// loss, with its validity mask.
pub fn pose_to_target<T: Scalar>(pose: &Pose3d) -> (ArrayD<T>, Vec<bool>) {
    let mut arr = ArrayD::<T>::zeros(vec![NUM_JOINTS, 3]);
    for j in 0..NUM_JOINTS {
        for c in 0..3 {
            arr[[j, c]] = T::cast_from(pose.joints[j][c]);
        }
    }
    (arr, pose.valid.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_transform_round_trip() {
        let t = CropTransform {
            scale: 1.75,
            offset: [12.0, -3.5],
        };
        let px = [40.0, 23.0];
        let f = t.crop_to_frame(px);
        let back = t.frame_to_crop(f);
        assert!((back[0] - px[0]).abs() < 1e-12);
        assert!((back[1] - px[1]).abs() < 1e-12);
    }
}
