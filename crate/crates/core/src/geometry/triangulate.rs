use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::camera::CameraView;
use crate::geometry::pose::{Pose2d, Pose3d, NUM_JOINTS};

/// Relative singular-value threshold below which the stacked DLT system is
/// considered rank-deficient.
const RANK_EPS: f64 = 1e-12;

/// One 2D observation of a world point: camera, pixel position, weight.
pub type Observation<'a> = (&'a CameraView, [f64; 2], f64);

/// Confidence-weighted algebraic (DLT) triangulation: stacks two rows per
/// view, scales each view's rows by its weight, and returns the
/// dehomogenized smallest-right-singular-vector solution.
pub fn triangulate_point(observations: &[Observation<'_>]) -> Result<Vector3<f64>> {
    for (_, _, w) in observations {
        if !w.is_finite() || *w < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "triangulation weight {w} must be finite and >= 0"
            )));
        }
    }
    let active: Vec<&Observation<'_>> = observations.iter().filter(|(_, _, w)| *w > 0.0).collect();
    if active.len() < 2 {
        return Err(Error::InsufficientViews { got: active.len() });
    }
    let mut a = DMatrix::<f64>::zeros(2 * active.len(), 4);
    for (i, (cam, px, w)) in active.iter().enumerate() {
        let p = &cam.projection;
        for c in 0..4 {
            a[(2 * i, c)] = w * (px[0] * p[(2, c)] - p[(0, c)]);
            a[(2 * i + 1, c)] = w * (px[1] * p[(2, c)] - p[(1, c)]);
        }
    }
    let svd = a.svd(false, true);
    let s = &svd.singular_values;
    if s[2] <= RANK_EPS * s[0] {
        return Err(Error::DegenerateGeometry(format!(
            "DLT system rank-deficient (singular values {:?})",
            s.as_slice()
        )));
    }
    let v_t = svd.v_t.expect("svd requested v_t");
    let h = v_t.row(v_t.nrows() - 1);
    if h[3].abs() <= RANK_EPS * h.norm() {
        return Err(Error::DegenerateGeometry(
            "triangulated point at infinity (w ~ 0)".into(),
        ));
    }
    Ok(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Joint-wise triangulation of per-view 2D poses, using confidences as DLT
/// weights. Joints observed with positive confidence in fewer than two views
/// are marked invalid instead of fabricated; a fully invalid result is an
/// error.
pub fn triangulate_pose(per_view: &[(&CameraView, &Pose2d)]) -> Result<Pose3d> {
    for (_, p2) in per_view {
        if p2.len() != NUM_JOINTS {
            return Err(Error::ShapeMismatch(format!(
                "pose2d with {} joints, expected {NUM_JOINTS}",
                p2.len()
            )));
        }
    }
    let mut joints = [[0.0; 3]; NUM_JOINTS];
    let mut valid = [false; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let obs: Vec<Observation<'_>> = per_view
            .iter()
            .filter(|(_, p2)| p2.confidence[j] > 0.0)
            .map(|(cam, p2)| (*cam, p2.points[j], p2.confidence[j]))
            .collect();
        if obs.len() < 2 {
            continue;
        }
        match triangulate_point(&obs) {
            Ok(p) => {
                joints[j] = [p.x, p.y, p.z];
                valid[j] = true;
            }
            Err(Error::DegenerateGeometry(_)) => {} // leave the joint invalid
            Err(e) => return Err(e),
        }
    }
    if !valid.iter().any(|v| *v) {
        return Err(Error::EmptyPose);
    }
    Pose3d::new(joints, valid)
}
