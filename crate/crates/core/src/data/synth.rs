//! Procedural synthetic multi-view dataset: an articulated 17-joint capsule
//! figure, two persons sharing one pose-motion distribution but differing in
//! limb colors, widths and body proportions, rendered from a camera ring
//! with exact projection geometry.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::data::render::{Canvas, Rgb};
use crate::data::{
    CropPolicy, DataSource, DatasetManifest, PersonId, PoseFile, SampleRecord, SkeletonSpec,
};
use crate::error::{Error, Result};
use crate::geometry::{
    limb_profile, scale_pose, CameraView, LimbProfile, Pose3d, Skeleton, NUM_JOINTS,
};
use crate::seeding;

/// Per-person appearance: capsule colors per body part, limb thickness in
/// world centimeters, and bone-length multipliers (proportions).
#[derive(Debug, Clone)]
pub struct PersonAppearance {
    pub torso_color: Rgb,
    pub arm_color_left: Rgb,
    pub arm_color_right: Rgb,
    pub leg_color_left: Rgb,
    pub leg_color_right: Rgb,
    pub head_color: Rgb,
    pub limb_width_cm: f64,
    pub torso_scale: f64,
    pub arm_scale: f64,
    pub leg_scale: f64,
}

impl PersonAppearance {
    pub fn person_a() -> Self {
        Self {
            torso_color: Rgb(0.85, 0.15, 0.10),
            arm_color_left: Rgb(0.95, 0.55, 0.10),
            arm_color_right: Rgb(0.15, 0.80, 0.25),
            leg_color_left: Rgb(0.85, 0.15, 0.55),
            leg_color_right: Rgb(0.92, 0.88, 0.15),
            head_color: Rgb(0.95, 0.80, 0.55),
            limb_width_cm: 10.0,
            torso_scale: 1.0,
            arm_scale: 1.0,
            leg_scale: 1.0,
        }
    }

    pub fn person_b() -> Self {
        Self {
            torso_color: Rgb(0.10, 0.35, 0.90),
            arm_color_left: Rgb(0.10, 0.80, 0.75),
            arm_color_right: Rgb(0.80, 0.45, 0.90),
            leg_color_left: Rgb(0.30, 0.25, 0.80),
            leg_color_right: Rgb(0.15, 0.60, 0.30),
            head_color: Rgb(0.60, 0.85, 0.95),
            limb_width_cm: 6.5,
            torso_scale: 0.92,
            arm_scale: 1.22,
            leg_scale: 0.82,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub views: usize,
    pub frames: usize,
    /// Rendered full-frame size in pixels (square).
    pub frame_size: u32,
    pub camera_radius_cm: f64,
    pub person_a: PersonAppearance,
    pub person_b: PersonAppearance,
    pub crop: CropPolicy,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            views: 2,
            frames: 250,
            frame_size: 96,
            camera_radius_cm: 350.0,
            person_a: PersonAppearance::person_a(),
            person_b: PersonAppearance::person_b(),
            crop: CropPolicy::default(),
        }
    }
}

/// Cameras on a ring around the figure, staggered in height, all looking at
/// the torso center.
pub fn ring_cameras(n: usize, frame_size: u32, radius_cm: f64) -> Vec<CameraView> {
    let target = Vector3::new(0.0, 110.0, 0.0);
    (0..n)
        .map(|i| {
            let angle = i as f64 * std::f64::consts::TAU / n.max(2) as f64 + 0.35;
            let height = 130.0 + 40.0 * ((i % 3) as f64 - 1.0);
            let center = Vector3::new(radius_cm * angle.cos(), height, radius_cm * angle.sin());
            let fwd = (target - center).normalize();
            let up0 = Vector3::new(0.0, 1.0, 0.0);
            let right = fwd.cross(&up0).normalize();
            let up = right.cross(&fwd);
            let r = Matrix3::from_rows(&[right.transpose(), (-up).transpose(), fwd.transpose()]);
            // Focal sized so a ~180 cm figure fills ~70% of the frame.
            let f = frame_size as f64 * 0.7 * radius_cm / 220.0;
            let c = frame_size as f64 / 2.0 - 0.5;
            let k = Matrix3::new(f, 0.0, c, 0.0, f, c, 0.0, 0.0, 1.0);
            CameraView::from_krt(
                format!("v{i}"),
                &k,
                &r,
                &(-r * center),
                (frame_size, frame_size),
            )
            .expect("ring camera is well-formed")
        })
        .collect()
}

/// Canonical standing figure (centimeters, y up), the base the motion model
/// deforms.
fn canonical_pose() -> Pose3d {
    let mut j = [[0.0; 3]; NUM_JOINTS];
    j[11] = [-11.0, 100.0, 0.0]; // left_hip
    j[12] = [11.0, 100.0, 0.0]; // right_hip
    j[13] = [-12.0, 55.0, 2.0]; // knees
    j[14] = [12.0, 55.0, 2.0];
    j[15] = [-13.0, 12.0, 0.0]; // ankles
    j[16] = [13.0, 12.0, 0.0];
    j[5] = [-19.0, 152.0, 0.0]; // shoulders
    j[6] = [19.0, 152.0, 0.0];
    j[7] = [-27.0, 125.0, 4.0]; // elbows
    j[8] = [27.0, 125.0, 4.0];
    j[9] = [-30.0, 100.0, 9.0]; // wrists
    j[10] = [30.0, 100.0, 9.0];
    j[0] = [0.0, 172.0, 9.0]; // nose
    j[1] = [-3.5, 177.0, 7.5]; // eyes
    j[2] = [3.5, 177.0, 7.5];
    j[3] = [-8.0, 174.0, 1.0]; // ears
    j[4] = [8.0, 174.0, 1.0];
    Pose3d::all_valid(j).expect("canonical pose is finite")
}

fn rotate_about(p: [f64; 3], pivot: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let v = Vector3::new(p[0] - pivot[0], p[1] - pivot[1], p[2] - pivot[2]);
    let ax = Vector3::from(axis).normalize();
    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(ax), angle);
    let r = rot * v;
    [pivot[0] + r.x, pivot[1] + r.y, pivot[2] + r.z]
}

fn rotate_subtree(pose: &mut Pose3d, joints: &[usize], pivot_joint: usize, axis: [f64; 3], angle: f64) {
    let pivot = pose.joints[pivot_joint];
    for &j in joints {
        pose.joints[j] = rotate_about(pose.joints[j], pivot, axis, angle);
    }
}

/// One motion channel: a subtree swinging about its pivot joint.
struct Swing {
    pivot: usize,
    subtree: &'static [usize],
    axis: [f64; 3],
    amplitude: f64,
    freq: f64,
}

const SWINGS: [Swing; 6] = [
    // arms about the shoulders
    Swing { pivot: 5, subtree: &[7, 9], axis: [1.0, 0.0, 0.0], amplitude: 0.55, freq: 0.23 },
    Swing { pivot: 6, subtree: &[8, 10], axis: [1.0, 0.0, 0.0], amplitude: 0.55, freq: 0.19 },
    // forearms about the elbows
    Swing { pivot: 7, subtree: &[9], axis: [0.0, 0.0, 1.0], amplitude: 0.45, freq: 0.31 },
    Swing { pivot: 8, subtree: &[10], axis: [0.0, 0.0, 1.0], amplitude: 0.45, freq: 0.29 },
    // legs about the hips
    Swing { pivot: 11, subtree: &[13, 15], axis: [1.0, 0.0, 0.0], amplitude: 0.35, freq: 0.17 },
    Swing { pivot: 12, subtree: &[14, 16], axis: [1.0, 0.0, 0.0], amplitude: 0.35, freq: 0.13 },
];

/// Pose of `person` at frame `t`: canonical figure animated by sinusoidal
/// subtree swings (per-person phases drawn from one shared distribution)
/// plus a whole-body yaw, then retargeted to the person's limb proportions.
fn pose_at(
    t: usize,
    phases: &[f64],
    yaw_phase: f64,
    skeleton: &Skeleton,
    profile: &LimbProfile,
) -> Pose3d {
    let mut pose = canonical_pose();
    let tf = t as f64;
    for (k, s) in SWINGS.iter().enumerate() {
        let angle = s.amplitude * (tf * s.freq + phases[k]).sin();
        rotate_subtree(&mut pose, s.subtree, s.pivot, s.axis, angle);
    }
    // Whole-body yaw about the vertical axis through the root.
    let yaw = 0.9 * (tf * 0.05 + yaw_phase).sin();
    let root = pose.joints[skeleton.root()];
    let all: Vec<usize> = (0..NUM_JOINTS).collect();
    rotate_subtree(&mut pose, &all, skeleton.root(), [0.0, 1.0, 0.0], yaw);
    let _ = root;
    scale_pose(&pose, skeleton, profile).expect("canonical bones are non-degenerate")
}

fn person_profile(app: &PersonAppearance, skeleton: &Skeleton) -> LimbProfile {
    let base = limb_profile(&[canonical_pose()], skeleton).expect("canonical profile");
    let bones = skeleton.bones();
    let lengths = base
        .bone_lengths
        .iter()
        .zip(&bones)
        .map(|(l, &(j, _p))| {
            let scale = match j {
                7..=10 => app.arm_scale,              // elbows, wrists
                13..=16 => app.leg_scale,             // knees, ankles
                0..=4 => 1.0,                         // head chain
                _ => app.torso_scale,                 // hips, shoulders
            };
            l * scale
        })
        .collect();
    LimbProfile::new(lengths).expect("scaled profile positive")
}

fn bone_color(app: &PersonAppearance, child: usize) -> Rgb {
    // Left joints have odd indices, right joints even (nose is 0).
    let left = child % 2 == 1;
    match child {
        7..=10 => {
            if left {
                app.arm_color_left
            } else {
                app.arm_color_right
            }
        }
        13..=16 => {
            if left {
                app.leg_color_left
            } else {
                app.leg_color_right
            }
        }
        0..=4 => app.head_color,
        _ => app.torso_color,
    }
}

/// Renders one person into one camera. Joints are drawn as slightly wider
/// discs over the bone capsules; capsule width is perspective-scaled.
pub fn render_view(
    pose: &Pose3d,
    camera: &CameraView,
    app: &PersonAppearance,
    skeleton: &Skeleton,
) -> Result<crate::models::ImageTensor> {
    let (w, h) = camera.image_size;
    let mut canvas = Canvas::new(h as usize, w as usize, Rgb(-0.85, -0.85, -0.85));
    let p2 = pose.project(camera)?;
    // Perspective scale: world cm -> pixels at the figure's depth.
    let center = camera.center();
    let root = pose.joints[skeleton.root()];
    let depth = (Vector3::from(root) - center).norm();
    let (k, _) = camera.decompose_kr()?;
    let px_per_cm = k[(0, 0)] / depth;

    // Painter's order: capsules and joint discs sorted far-to-near so
    // occlusion is consistent across views.
    enum Item {
        Capsule([f64; 2], [f64; 2], f64, Rgb),
        Disc([f64; 2], f64, Rgb),
    }
    let dist = |p: [f64; 3]| (Vector3::from(p) - center).norm();
    let mut items: Vec<(f64, Item)> = Vec::new();
    for &(j, parent) in &skeleton.bones() {
        if !(pose.valid[j] && pose.valid[parent]) {
            continue;
        }
        let mid = [
            (pose.joints[j][0] + pose.joints[parent][0]) / 2.0,
            (pose.joints[j][1] + pose.joints[parent][1]) / 2.0,
            (pose.joints[j][2] + pose.joints[parent][2]) / 2.0,
        ];
        let r = app.limb_width_cm * 0.5 * px_per_cm;
        items.push((
            dist(mid),
            Item::Capsule(p2.points[parent], p2.points[j], r, bone_color(app, j)),
        ));
    }
    for j in 0..NUM_JOINTS {
        if pose.valid[j] {
            let r = app.limb_width_cm * 0.8 * px_per_cm;
            // Discs sit marginally nearer than their bone so joints stay
            // visible on top of their own limb.
            items.push((
                dist(pose.joints[j]) - 1e-3,
                Item::Disc(p2.points[j], r, bone_color(app, j)),
            ));
        }
    }
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite depths"));
    for (_, item) in items {
        match item {
            Item::Capsule(a, b, r, c) => canvas.draw_capsule(a, b, r, c),
            Item::Disc(p, r, c) => canvas.draw_disc(p, r, c),
        }
    }
    Ok(canvas.into_image())
}

fn save_png(img: &crate::models::ImageTensor, path: &Path) -> Result<()> {
    let (h, w) = (img.height() as u32, img.width() as u32);
    let buf = img.to_rgb8();
    image::save_buffer(path, &buf, w, h, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::image(path, e))
}

/// Generates and stores the synthetic dataset: `manifest.json`, `images/`,
/// `poses/`. Deterministic for a given config and seed.
pub fn synth_scene(config: &SynthConfig, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    if config.views < 2 {
        return Err(Error::Config(format!(
            "synthetic scene needs at least 2 views, got {}",
            config.views
        )));
    }
    if config.frames == 0 {
        return Err(Error::Config("synthetic scene needs frames >= 1".into()));
    }
    std::fs::create_dir_all(out_dir.join("images")).map_err(|e| Error::io(out_dir, e))?;
    std::fs::create_dir_all(out_dir.join("poses")).map_err(|e| Error::io(out_dir, e))?;

    let cameras = ring_cameras(config.views, config.frame_size, config.camera_radius_cm);
    let skeleton = Skeleton::coco17();
    let mut persons = BTreeMap::new();

    for person in [PersonId::A, PersonId::B] {
        let app = match person {
            PersonId::A => &config.person_a,
            PersonId::B => &config.person_b,
        };
        let profile = person_profile(app, &skeleton);
        // Per-person phases drawn from the shared motion distribution.
        let mut rng = seeding::derive_rng(seed, &["synth", "phases", person.key()], &[]);
        let phases: Vec<f64> = (0..SWINGS.len())
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let yaw_phase = rng.random_range(0.0..std::f64::consts::TAU);

        let mut records = Vec::with_capacity(config.frames);
        for t in 0..config.frames {
            let pose = pose_at(t, &phases, yaw_phase, &skeleton, &profile);
            let mut pose2d = BTreeMap::new();
            let mut images = BTreeMap::new();
            for cam in &cameras {
                let img = render_view(&pose, cam, app, &skeleton)?;
                let rel = format!("images/{}_{}_{t:05}.png", person.key(), cam.view_id);
                save_png(&img, &out_dir.join(&rel))?;
                images.insert(cam.view_id.clone(), rel);
                pose2d.insert(cam.view_id.clone(), pose.project(cam)?);
            }
            let pose_rel = format!("poses/{}_{t:05}.json", person.key());
            PoseFile {
                pose3d: pose.clone(),
                pose2d,
            }
            .save(&out_dir.join(&pose_rel))?;
            records.push(SampleRecord {
                t,
                pose: pose_rel,
                images,
            });
        }
        persons.insert(person.key().to_string(), records);
    }

    let manifest = DatasetManifest {
        source: DataSource::Synthetic,
        units: "cm".into(),
        seed: Some(seed),
        cameras,
        skeleton: SkeletonSpec::coco17(),
        crop: config.crop,
        persons,
    };
    manifest.validate()?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    #[test]
    fn cameras_are_distinct_and_valid() {
        let cams = ring_cameras(4, 96, 350.0);
        assert_eq!(cams.len(), 4);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = (cams[i].center() - cams[j].center()).norm();
                assert!(d > 50.0, "cameras {i} and {j} nearly coincide");
            }
        }
    }

    #[test]
    fn poses_share_distribution_but_differ_in_proportions() {
        let skeleton = Skeleton::coco17();
        let pa = person_profile(&PersonAppearance::person_a(), &skeleton);
        let pb = person_profile(&PersonAppearance::person_b(), &skeleton);
        let rel: Vec<f64> = pa
            .bone_lengths
            .iter()
            .zip(&pb.bone_lengths)
            .map(|(a, b)| (a - b).abs() / a)
            .collect();
        assert!(rel.iter().cloned().fold(0.0, f64::max) > 0.1, "proportions differ");
    }

    #[test]
    fn animated_poses_keep_profile_lengths() {
        let skeleton = Skeleton::coco17();
        let profile = person_profile(&PersonAppearance::person_b(), &skeleton);
        let pose = pose_at(37, &[0.1; 6], 0.7, &skeleton, &profile);
        let measured = limb_profile(&[pose], &skeleton).unwrap();
        for (a, b) in measured.bone_lengths.iter().zip(&profile.bone_lengths) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn figure_projects_inside_frame() {
        let skeleton = Skeleton::coco17();
        let profile = person_profile(&PersonAppearance::person_a(), &skeleton);
        let cams = ring_cameras(3, 96, 350.0);
        for t in [0, 50, 123] {
            let pose = pose_at(t, &[0.9, 2.1, 0.3, 4.2, 1.1, 5.3], 2.0, &skeleton, &profile);
            for cam in &cams {
                let p2 = project(&pose, cam).unwrap();
                for p in &p2.points {
                    assert!(p[0] > 2.0 && p[0] < 94.0, "x {p:?} out of frame at t={t}");
                    assert!(p[1] > 2.0 && p[1] < 94.0, "y {p:?} out of frame at t={t}");
                }
            }
        }
    }
}
