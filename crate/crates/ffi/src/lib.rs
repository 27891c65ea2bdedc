//! C ABI over the core pipeline: geometry primitives on flat arrays, opaque
//! camera/skeleton handles, and the run-level entry points (synth, ingest,
//! train, eval, compare) driven by config files.
//!
//! Conventions: functions return [`MvptStatus`] (0 = ok); the message for
//! the most recent failure on the calling thread is available via
//! [`mvpt_last_error`]. Poses travel as row-major `double[17*3]` joint
//! arrays plus `uint8_t[17]` validity masks; 2D points as `double[17*2]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use mvpt_core::commands;
use mvpt_core::config::RunConfigFile;
use mvpt_core::geometry::{
    limb_profile, scale_pose, smooth_mse, triangulate_pose, CameraView, LimbProfile, Pose2d,
    Pose3d, Skeleton,
};
use mvpt_core::Error;
use nalgebra::Matrix3x4;

/// Joints per pose (COCO-17).
pub const MVPT_NUM_JOINTS: usize = 17;
/// Bones in the kinematic tree.
pub const MVPT_NUM_BONES: usize = 16;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum MvptStatus {
    Ok = 0,
    /// Null pointer or malformed argument.
    InvalidArgument = 1,
    /// Degenerate geometry, insufficient views, undefined distances.
    Geometry = 2,
    /// File system or serialization failure.
    Io = 3,
    /// Configuration rejected.
    Config = 4,
    /// Training/evaluation runtime failure.
    Runtime = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn status_of(err: &Error) -> MvptStatus {
    match err {
        Error::DegenerateProjection { .. }
        | Error::InsufficientViews { .. }
        | Error::DegenerateGeometry(_)
        | Error::EmptyPose
        | Error::UndefinedDistance
        | Error::IncompleteProfile { .. }
        | Error::DegenerateBone { .. } => MvptStatus::Geometry,
        Error::Io { .. } | Error::Json { .. } | Error::Image { .. } | Error::Checkpoint(_) => {
            MvptStatus::Io
        }
        Error::Config(_) | Error::InvalidParameter(_) | Error::MissingCamera(_) => {
            MvptStatus::Config
        }
        _ => MvptStatus::Runtime,
    }
}

fn fail(err: Error) -> MvptStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

fn fail_arg(msg: &str) -> MvptStatus {
    set_error(msg.to_string());
    MvptStatus::InvalidArgument
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mvpt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Static library version string.
#[no_mangle]
pub extern "C" fn mvpt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque calibrated camera.
pub struct MvptCamera(CameraView);

/// Opaque kinematic tree.
pub struct MvptSkeleton(Skeleton);

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

unsafe fn read_pose(joints: *const f64, valid: *const u8) -> Option<Pose3d> {
    if joints.is_null() {
        return None;
    }
    let j = std::slice::from_raw_parts(joints, MVPT_NUM_JOINTS * 3);
    let mut arr = [[0.0; 3]; MVPT_NUM_JOINTS];
    let mut mask = [true; MVPT_NUM_JOINTS];
    for k in 0..MVPT_NUM_JOINTS {
        arr[k] = [j[3 * k], j[3 * k + 1], j[3 * k + 2]];
    }
    if !valid.is_null() {
        let v = std::slice::from_raw_parts(valid, MVPT_NUM_JOINTS);
        for k in 0..MVPT_NUM_JOINTS {
            mask[k] = v[k] != 0;
        }
    }
    Pose3d::new(arr, mask).ok()
}

unsafe fn write_pose(pose: &Pose3d, joints: *mut f64, valid: *mut u8) {
    if !joints.is_null() {
        let out = std::slice::from_raw_parts_mut(joints, MVPT_NUM_JOINTS * 3);
        for k in 0..MVPT_NUM_JOINTS {
            out[3 * k..3 * k + 3].copy_from_slice(&pose.joints[k]);
        }
    }
    if !valid.is_null() {
        let out = std::slice::from_raw_parts_mut(valid, MVPT_NUM_JOINTS);
        for k in 0..MVPT_NUM_JOINTS {
            out[k] = pose.valid[k] as u8;
        }
    }
}

/// Creates a camera from a row-major 3x4 projection matrix.
///
/// # Safety
/// `view_id` must be a NUL-terminated string and `projection` must point to
/// 12 readable doubles.
#[no_mangle]
pub unsafe extern "C" fn mvpt_camera_new(
    view_id: *const c_char,
    projection: *const f64,
    width: u32,
    height: u32,
) -> *mut MvptCamera {
    let Some(id) = cstr(view_id) else {
        set_error("view_id must be valid utf-8".into());
        return std::ptr::null_mut();
    };
    if projection.is_null() {
        set_error("projection must not be null".into());
        return std::ptr::null_mut();
    }
    let p = std::slice::from_raw_parts(projection, 12);
    match CameraView::new(id, Matrix3x4::from_row_slice(p), (width, height)) {
        Ok(cam) => Box::into_raw(Box::new(MvptCamera(cam))),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `camera` must come from [`mvpt_camera_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mvpt_camera_free(camera: *mut MvptCamera) {
    if !camera.is_null() {
        drop(Box::from_raw(camera));
    }
}

/// The fixed COCO-17 kinematic tree.
#[no_mangle]
pub extern "C" fn mvpt_skeleton_coco17() -> *mut MvptSkeleton {
    Box::into_raw(Box::new(MvptSkeleton(Skeleton::coco17())))
}

/// # Safety
/// `skeleton` must come from [`mvpt_skeleton_coco17`] and not have been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn mvpt_skeleton_free(skeleton: *mut MvptSkeleton) {
    if !skeleton.is_null() {
        drop(Box::from_raw(skeleton));
    }
}

/// Projects a pose into a camera: `out_points` receives 17 (x, y) pixel
/// pairs, `out_conf` 17 confidences (1 for valid joints, 0 otherwise).
///
/// # Safety
/// Pointers must reference buffers of the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn mvpt_project(
    camera: *const MvptCamera,
    joints: *const f64,
    valid: *const u8,
    out_points: *mut f64,
    out_conf: *mut f64,
) -> MvptStatus {
    let Some(cam) = camera.as_ref() else {
        return fail_arg("camera must not be null");
    };
    let Some(pose) = read_pose(joints, valid) else {
        return fail_arg("joints must be 17*3 finite doubles");
    };
    if out_points.is_null() || out_conf.is_null() {
        return fail_arg("output buffers must not be null");
    }
    match pose.project(&cam.0) {
        Ok(p2) => {
            let pts = std::slice::from_raw_parts_mut(out_points, MVPT_NUM_JOINTS * 2);
            let conf = std::slice::from_raw_parts_mut(out_conf, MVPT_NUM_JOINTS);
            for k in 0..MVPT_NUM_JOINTS {
                pts[2 * k] = p2.points[k][0];
                pts[2 * k + 1] = p2.points[k][1];
                conf[k] = p2.confidence[k];
            }
            MvptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Joint-wise confidence-weighted triangulation across `n_cameras` views.
/// `points` is `n_cameras * 17 * 2` doubles, `confidence`
/// `n_cameras * 17`; joints seen by fewer than two positive-confidence
/// views come back invalid.
///
/// # Safety
/// Pointers must reference buffers of the documented sizes; every camera
/// handle must be live.
#[no_mangle]
pub unsafe extern "C" fn mvpt_triangulate_pose(
    cameras: *const *const MvptCamera,
    n_cameras: usize,
    points: *const f64,
    confidence: *const f64,
    out_joints: *mut f64,
    out_valid: *mut u8,
) -> MvptStatus {
    if cameras.is_null() || points.is_null() || confidence.is_null() || out_joints.is_null() {
        return fail_arg("null argument");
    }
    let cams = std::slice::from_raw_parts(cameras, n_cameras);
    let pts = std::slice::from_raw_parts(points, n_cameras * MVPT_NUM_JOINTS * 2);
    let conf = std::slice::from_raw_parts(confidence, n_cameras * MVPT_NUM_JOINTS);
    let mut views = Vec::with_capacity(n_cameras);
    for (vi, cam) in cams.iter().enumerate() {
        let Some(cam) = cam.as_ref() else {
            return fail_arg("camera handle must not be null");
        };
        let mut p = Vec::with_capacity(MVPT_NUM_JOINTS);
        let mut c = Vec::with_capacity(MVPT_NUM_JOINTS);
        for k in 0..MVPT_NUM_JOINTS {
            let base = (vi * MVPT_NUM_JOINTS + k) * 2;
            p.push([pts[base], pts[base + 1]]);
            c.push(conf[vi * MVPT_NUM_JOINTS + k].clamp(0.0, 1.0));
        }
        match Pose2d::new(p, c) {
            Ok(p2) => views.push((&cam.0, p2)),
            Err(e) => return fail(e),
        }
    }
    let refs: Vec<(&CameraView, &Pose2d)> = views.iter().map(|(c, p)| (*c, p)).collect();
    match triangulate_pose(&refs) {
        Ok(pose) => {
            write_pose(&pose, out_joints, out_valid);
            MvptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Outlier-robust pose distance (mean squared per-coordinate error below
/// `epsilon`, compressed above it).
///
/// # Safety
/// Pose buffers must hold 17*3 doubles (+ optional 17-byte masks).
#[no_mangle]
pub unsafe extern "C" fn mvpt_smooth_mse(
    a_joints: *const f64,
    a_valid: *const u8,
    b_joints: *const f64,
    b_valid: *const u8,
    epsilon: f64,
    out: *mut f64,
) -> MvptStatus {
    let (Some(a), Some(b)) = (read_pose(a_joints, a_valid), read_pose(b_joints, b_valid)) else {
        return fail_arg("poses must be 17*3 finite doubles");
    };
    if out.is_null() {
        return fail_arg("out must not be null");
    }
    match smooth_mse(&a, &b, epsilon) {
        Ok(v) => {
            *out = v;
            MvptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Mean bone lengths over `n_poses` poses (each 17*3 doubles plus optional
/// mask); `out_lengths` receives 16 doubles in bone order.
///
/// # Safety
/// Buffers must match the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn mvpt_limb_profile(
    skeleton: *const MvptSkeleton,
    joints: *const f64,
    valid: *const u8,
    n_poses: usize,
    out_lengths: *mut f64,
) -> MvptStatus {
    let Some(skel) = skeleton.as_ref() else {
        return fail_arg("skeleton must not be null");
    };
    if joints.is_null() || out_lengths.is_null() || n_poses == 0 {
        return fail_arg("need at least one pose and non-null buffers");
    }
    let mut poses = Vec::with_capacity(n_poses);
    for i in 0..n_poses {
        let j = joints.add(i * MVPT_NUM_JOINTS * 3);
        let v = if valid.is_null() {
            std::ptr::null()
        } else {
            valid.add(i * MVPT_NUM_JOINTS)
        };
        let Some(pose) = read_pose(j, v) else {
            return fail_arg("pose entries must be finite");
        };
        poses.push(pose);
    }
    match limb_profile(&poses, &skel.0) {
        Ok(profile) => {
            std::slice::from_raw_parts_mut(out_lengths, MVPT_NUM_BONES)
                .copy_from_slice(&profile.bone_lengths);
            MvptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Retargets a pose to the given bone lengths (16 doubles), keeping bone
/// directions and the root position.
///
/// # Safety
/// Buffers must match the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn mvpt_scale_pose(
    skeleton: *const MvptSkeleton,
    joints: *const f64,
    valid: *const u8,
    bone_lengths: *const f64,
    out_joints: *mut f64,
    out_valid: *mut u8,
) -> MvptStatus {
    let Some(skel) = skeleton.as_ref() else {
        return fail_arg("skeleton must not be null");
    };
    let Some(pose) = read_pose(joints, valid) else {
        return fail_arg("joints must be 17*3 finite doubles");
    };
    if bone_lengths.is_null() || out_joints.is_null() {
        return fail_arg("null buffer");
    }
    let lengths = std::slice::from_raw_parts(bone_lengths, MVPT_NUM_BONES).to_vec();
    let profile = match LimbProfile::new(lengths) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match scale_pose(&pose, &skel.0, &profile) {
        Ok(scaled) => {
            write_pose(&scaled, out_joints, out_valid);
            MvptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Mean per-joint Euclidean distance over jointly valid joints.
///
/// # Safety
/// Pose buffers must hold 17*3 doubles (+ optional 17-byte masks).
#[no_mangle]
pub unsafe extern "C" fn mvpt_mpjpe(
    a_joints: *const f64,
    a_valid: *const u8,
    b_joints: *const f64,
    b_valid: *const u8,
    out: *mut f64,
) -> MvptStatus {
    let (Some(a), Some(b)) = (read_pose(a_joints, a_valid), read_pose(b_joints, b_valid)) else {
        return fail_arg("poses must be 17*3 finite doubles");
    };
    if out.is_null() {
        return fail_arg("out must not be null");
    }
    match mvpt_core::eval::mpjpe(&a, &b) {
        Ok(v) => {
            *out = v;
            MvptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

unsafe fn load_config(path: *const c_char) -> Result<RunConfigFile, MvptStatus> {
    let Some(p) = cstr(path) else {
        return Err(fail_arg("config path must be valid utf-8"));
    };
    RunConfigFile::load(Path::new(p)).map_err(|e| fail(e))
}

unsafe fn req_path(ptr: *const c_char, what: &str) -> Result<PathBuf, MvptStatus> {
    match cstr(ptr) {
        Some(s) => Ok(PathBuf::from(s)),
        None => Err(fail_arg(&format!("{what} must be a valid path"))),
    }
}

/// Generates the synthetic dataset described by the config. `seed < 0`
/// keeps the config's seed.
///
/// # Safety
/// Paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mvpt_synth(
    config_path: *const c_char,
    seed: i64,
    out_dir: *const c_char,
) -> MvptStatus {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let out = match req_path(out_dir, "out_dir") {
        Ok(p) => p,
        Err(s) => return s,
    };
    let seed = (seed >= 0).then_some(seed as u64);
    match commands::cmd_synth(&cfg, seed, &out) {
        Ok(_) => MvptStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Ingests the CMU-Panoptic sequence named in the config.
///
/// # Safety
/// Paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mvpt_ingest(
    config_path: *const c_char,
    out_dir: *const c_char,
) -> MvptStatus {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let out = match req_path(out_dir, "out_dir") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match commands::cmd_ingest(&cfg, &out) {
        Ok(()) => MvptStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Trains a run into `out_dir`. `resume` and `detector` may be NULL.
///
/// # Safety
/// Paths must be NUL-terminated strings (or NULL where documented).
#[no_mangle]
pub unsafe extern "C" fn mvpt_train(
    config_path: *const c_char,
    out_dir: *const c_char,
    baseline: bool,
    resume: *const c_char,
    detector: *const c_char,
) -> MvptStatus {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let out = match req_path(out_dir, "out_dir") {
        Ok(p) => p,
        Err(s) => return s,
    };
    let resume = cstr(resume).map(PathBuf::from);
    let detector = cstr(detector).map(PathBuf::from);
    match commands::cmd_train(&cfg, &out, baseline, resume.as_deref(), detector.as_deref()) {
        Ok(_) => MvptStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Evaluates a checkpoint and writes the JSON report.
///
/// # Safety
/// Paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mvpt_eval(
    config_path: *const c_char,
    checkpoint: *const c_char,
    report_path: *const c_char,
    baseline: bool,
) -> MvptStatus {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(s) => return s,
    };
    let (ckpt, report) = match (
        req_path(checkpoint, "checkpoint"),
        req_path(report_path, "report_path"),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match commands::cmd_eval(&cfg, &ckpt, &report, baseline) {
        Ok(_) => MvptStatus::Ok,
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam_handle() -> *mut MvptCamera {
        // P = K [R | t]: focal 80, principal point 32, R = I, t = (0,0,300).
        let p = [
            80.0, 0.0, 32.0, 9600.0, //
            0.0, 80.0, 32.0, 9600.0, //
            0.0, 0.0, 1.0, 300.0,
        ];
        let id = CString::new("v0").unwrap();
        unsafe { mvpt_camera_new(id.as_ptr(), p.as_ptr(), 64, 64) }
    }

    #[test]
    fn project_and_triangulate_round_trip_through_the_c_abi() {
        let c0 = cam_handle();
        assert!(!c0.is_null());
        // Second camera: same intrinsics, rotated 90 degrees about y.
        let k = nalgebra::Matrix3::new(80.0, 0.0, 32.0, 0.0, 80.0, 32.0, 0.0, 0.0, 1.0);
        let r = nalgebra::Rotation3::from_euler_angles(0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let cam1 = CameraView::from_krt("v1", &k, r.matrix(), &nalgebra::Vector3::new(0.0, 0.0, 300.0), (64, 64)).unwrap();
        let mut p1 = [0.0; 12];
        for row in 0..3 {
            for col in 0..4 {
                p1[row * 4 + col] = cam1.projection[(row, col)];
            }
        }
        let id1 = CString::new("v1").unwrap();
        let c1 = unsafe { mvpt_camera_new(id1.as_ptr(), p1.as_ptr(), 64, 64) };
        assert!(!c1.is_null());

        let mut joints = [0.0f64; MVPT_NUM_JOINTS * 3];
        for k in 0..MVPT_NUM_JOINTS {
            joints[3 * k] = (k as f64 * 0.9).sin() * 30.0;
            joints[3 * k + 1] = 20.0 + 4.0 * k as f64;
            joints[3 * k + 2] = (k as f64 * 1.7).cos() * 25.0;
        }
        let valid = [1u8; MVPT_NUM_JOINTS];

        let mut pts = [0.0f64; 2 * MVPT_NUM_JOINTS * 2];
        let mut conf = [0.0f64; 2 * MVPT_NUM_JOINTS];
        for (vi, cam) in [c0, c1].into_iter().enumerate() {
            let status = unsafe {
                mvpt_project(
                    cam,
                    joints.as_ptr(),
                    valid.as_ptr(),
                    pts.as_mut_ptr().add(vi * MVPT_NUM_JOINTS * 2),
                    conf.as_mut_ptr().add(vi * MVPT_NUM_JOINTS),
                )
            };
            assert!(matches!(status, MvptStatus::Ok));
        }

        let cams = [c0 as *const MvptCamera, c1 as *const MvptCamera];
        let mut out = [0.0f64; MVPT_NUM_JOINTS * 3];
        let mut out_valid = [0u8; MVPT_NUM_JOINTS];
        let status = unsafe {
            mvpt_triangulate_pose(
                cams.as_ptr(),
                2,
                pts.as_ptr(),
                conf.as_ptr(),
                out.as_mut_ptr(),
                out_valid.as_mut_ptr(),
            )
        };
        assert!(matches!(status, MvptStatus::Ok));
        for k in 0..MVPT_NUM_JOINTS * 3 {
            assert!((out[k] - joints[k]).abs() < 1e-6, "coord {k}");
        }
        assert!(out_valid.iter().all(|v| *v == 1));

        // Insufficient views surface as a geometry error with a message.
        let status = unsafe {
            mvpt_triangulate_pose(
                cams.as_ptr(),
                1,
                pts.as_ptr(),
                conf.as_ptr(),
                out.as_mut_ptr(),
                out_valid.as_mut_ptr(),
            )
        };
        assert!(matches!(status, MvptStatus::Geometry));
        let msg = unsafe { CStr::from_ptr(mvpt_last_error()) };
        assert!(!msg.to_bytes().is_empty());

        unsafe {
            mvpt_camera_free(c0);
            mvpt_camera_free(c1);
        }
    }

    #[test]
    fn pose_math_through_the_c_abi() {
        let skel = mvpt_skeleton_coco17();
        // A simple valid pose: reuse the canonical figure via limb_profile
        // round trip.
        let mut joints = [0.0f64; MVPT_NUM_JOINTS * 3];
        let t_pose: [[f64; 3]; MVPT_NUM_JOINTS] = [
            [0.0, 168.0, 8.0],
            [-3.0, 172.0, 7.0],
            [3.0, 172.0, 7.0],
            [-7.0, 170.0, 2.0],
            [7.0, 170.0, 2.0],
            [-18.0, 150.0, 0.0],
            [18.0, 150.0, 0.0],
            [-45.0, 150.0, 0.0],
            [45.0, 150.0, 0.0],
            [-70.0, 150.0, 0.0],
            [70.0, 150.0, 0.0],
            [-10.0, 100.0, 0.0],
            [10.0, 100.0, 0.0],
            [-10.0, 55.0, 0.0],
            [10.0, 55.0, 0.0],
            [-10.0, 10.0, 0.0],
            [10.0, 10.0, 0.0],
        ];
        for (k, p) in t_pose.iter().enumerate() {
            joints[3 * k..3 * k + 3].copy_from_slice(p);
        }

        let mut lengths = [0.0f64; MVPT_NUM_BONES];
        let status = unsafe {
            mvpt_limb_profile(
                skel,
                joints.as_ptr(),
                std::ptr::null(),
                1,
                lengths.as_mut_ptr(),
            )
        };
        assert!(matches!(status, MvptStatus::Ok));
        assert!(lengths.iter().all(|l| *l > 0.0));

        // Doubling the profile doubles bone vectors; self-smooth-mse is 0.
        for l in &mut lengths {
            *l *= 2.0;
        }
        let mut scaled = [0.0f64; MVPT_NUM_JOINTS * 3];
        let status = unsafe {
            mvpt_scale_pose(
                skel,
                joints.as_ptr(),
                std::ptr::null(),
                lengths.as_ptr(),
                scaled.as_mut_ptr(),
                std::ptr::null_mut(),
            )
        };
        assert!(matches!(status, MvptStatus::Ok));
        let mut d = 0.0f64;
        let status = unsafe {
            mvpt_smooth_mse(
                joints.as_ptr(),
                std::ptr::null(),
                joints.as_ptr(),
                std::ptr::null(),
                400.0,
                &mut d,
            )
        };
        assert!(matches!(status, MvptStatus::Ok));
        assert_eq!(d, 0.0);

        let mut m = 0.0f64;
        let status = unsafe {
            mvpt_mpjpe(
                joints.as_ptr(),
                std::ptr::null(),
                scaled.as_ptr(),
                std::ptr::null(),
                &mut m,
            )
        };
        assert!(matches!(status, MvptStatus::Ok));
        assert!(m > 0.0);

        // Bad epsilon -> config-class error.
        let status = unsafe {
            mvpt_smooth_mse(
                joints.as_ptr(),
                std::ptr::null(),
                joints.as_ptr(),
                std::ptr::null(),
                0.0,
                &mut d,
            )
        };
        assert!(matches!(status, MvptStatus::Config));

        unsafe { mvpt_skeleton_free(skel) };
    }
}
