//! Multi-view geometry: calibrated cameras, 3D/2D poses, confidence-weighted
//! DLT triangulation, limb-length pose scaling and the smooth-MSE pose
//! distance. Everything here is pure `f64` and free of shared state.

mod camera;
mod distance;
mod pose;
mod skeleton;
mod triangulate;

pub use camera::{project, CameraView};
pub use distance::smooth_mse;
pub(crate) use distance::smooth_mse_branch;
pub use pose::{Pose2d, Pose3d, NUM_JOINTS};
pub use skeleton::{limb_profile, scale_pose, LimbProfile, Skeleton, COCO17_JOINT_NAMES};
pub use triangulate::{triangulate_point, triangulate_pose};
