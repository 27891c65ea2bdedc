//! Dataset contracts: deterministic generation, renderer/projection
//! consistency, crop/augmentation geometry, manifest round trips, and the
//! Panoptic ingest path against a fabricated fixture tree.

mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::micro_config;
use mvpt_core::data::{
    ingest_panoptic, person_bbox, synth_scene, AugmentSeed, Dataset, DatasetManifest,
    PanopticPersonSpec, PersonId, SynthConfig,
};
use mvpt_core::geometry::{project, CameraView, NUM_JOINTS};
use mvpt_core::models::ImageTensor;

fn tiny_synth() -> SynthConfig {
    let cfg = micro_config();
    let mut synth = cfg.data.synth.to_synth_config();
    synth.frames = 6;
    synth
}

#[test]
fn same_seed_gives_byte_identical_datasets() {
    let synth = tiny_synth();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    synth_scene(&synth, 42, d1.path()).unwrap();
    synth_scene(&synth, 42, d2.path()).unwrap();
    let h1 = mvpt_core::commands::dataset_hash(d1.path()).unwrap();
    let h2 = mvpt_core::commands::dataset_hash(d2.path()).unwrap();
    assert_eq!(h1, h2, "same seed, same bytes");
    let d3 = tempfile::tempdir().unwrap();
    synth_scene(&synth, 43, d3.path()).unwrap();
    assert_ne!(h1, mvpt_core::commands::dataset_hash(d3.path()).unwrap());
}

/// Intensity-weighted centroid of pixels near a color, in a window around
/// an expected point.
fn local_centroid(img: &ImageTensor, around: [f64; 2], radius: f64) -> Option<[f64; 2]> {
    let (h, w) = (img.height(), img.width());
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - around[0];
            let dy = y as f64 - around[1];
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            // Brightness over the dark background.
            let v = (0..3)
                .map(|c| img.data()[[c, y, x]] as f64 + 0.85)
                .sum::<f64>()
                .max(0.0);
            sx += v * x as f64;
            sy += v * y as f64;
            sw += v;
        }
    }
    (sw > 1e-9).then(|| [sx / sw, sy / sw])
}

#[test]
fn rendered_joints_match_projection_within_half_pixel() {
    // Stored 2D poses are exact projections, and the renderer's joint marks
    // land on them: an isolated single-joint render has its blob centroid
    // within half a pixel of project().
    let dir = tempfile::tempdir().unwrap();
    let synth = tiny_synth();
    let manifest = synth_scene(&synth, 17, dir.path()).unwrap();
    let dataset = Dataset::from_manifest(manifest.clone(), dir.path().to_path_buf()).unwrap();
    let skeleton = dataset.skeleton().clone();

    for t in 0..3 {
        let pose = dataset.gt_pose(PersonId::A, t).unwrap();
        for cam in &manifest.cameras {
            let p2 = project(&pose, cam).unwrap();
            // Exactness of the stored projections.
            let stored = mvpt_core::data::PoseFile::load(
                &dir.path().join(format!("poses/a_{t:05}.json")),
            )
            .unwrap();
            assert_eq!(&p2, stored.pose2d.get(&cam.view_id).unwrap());

            // Isolated joint renders: keep one joint valid at a time.
            for j in [0usize, 9, 16] {
                let mut lone = pose.clone();
                for k in 0..NUM_JOINTS {
                    lone.valid[k] = k == j;
                }
                let img = mvpt_core::data::render_view(
                    &lone,
                    cam,
                    &mvpt_core::data::PersonAppearance::person_a(),
                    &skeleton,
                )
                .unwrap();
                let c = local_centroid(&img, p2.points[j], 6.0).expect("visible mark");
                let err = ((c[0] - p2.points[j][0]).powi(2)
                    + (c[1] - p2.points[j][1]).powi(2))
                .sqrt();
                assert!(
                    err < 0.5,
                    "joint {j} t {t} {}: centroid {c:?} vs {:?} ({err:.3}px)",
                    cam.view_id,
                    p2.points[j]
                );
            }
        }
    }
}

#[test]
fn augmentation_is_horizontal_only_geometry_exact_and_never_crops() {
    let dir = tempfile::tempdir().unwrap();
    let synth = tiny_synth();
    let manifest = synth_scene(&synth, 23, dir.path()).unwrap();
    let dataset = Dataset::from_manifest(manifest.clone(), dir.path().to_path_buf()).unwrap();

    let plain = dataset.sample(PersonId::A, 2, 48, None).unwrap();
    let plain2 = dataset.sample(PersonId::A, 2, 48, None).unwrap();
    assert_eq!(plain.images[0], plain2.images[0], "no augment -> identical");
    assert_eq!(plain.crop_transforms, plain2.crop_transforms);

    let pose = dataset.gt_pose(PersonId::A, 2).unwrap();
    // 10k draws: vertical offset fixed, bbox always inside the crop.
    for step in 0..10_000u64 {
        let aug = AugmentSeed {
            seed: 99,
            epoch: step / 1000,
            step,
        };
        // Geometry only: recompute the transforms cheaply via sample at a
        // tiny resolution for the first few, full math for the rest.
        let s = dataset.sample(PersonId::A, 2, 16, Some(aug)).unwrap();
        assert_eq!(s.gt_pose, pose, "3D labels never transformed");
        for (vi, cam) in manifest.cameras.iter().enumerate() {
            let tf = s.crop_transforms[vi];
            let plain_tf = plain.crop_transforms[vi];
            // Horizontal-only: vertical offset matches the unaugmented one
            // exactly (the resolutions differ, so compare frame-space
            // centers of the crop).
            let res = 16.0;
            let plain_res = 48.0;
            let cy = tf.crop_to_frame([0.0, (res - 1.0) / 2.0])[1];
            let cy0 = plain_tf.crop_to_frame([0.0, (plain_res - 1.0) / 2.0])[1];
            assert!((cy - cy0).abs() < 1e-9, "vertical shift forbidden");
            // The projected bbox stays inside the crop.
            let p2 = project(&pose, cam).unwrap();
            let (lo, hi) = person_bbox(&p2).unwrap();
            for corner in [lo, hi] {
                let c = tf.frame_to_crop(corner);
                let slack = 0.5 + 0.5 / tf.scale; // half crop texel + half frame pixel
                assert!(
                    c[0] > -slack
                        && c[0] < res - 1.0 + slack
                        && c[1] > -slack
                        && c[1] < res - 1.0 + slack,
                    "bbox corner {corner:?} left the crop at step {step}: {c:?}"
                );
            }
        }
        if step == 64 {
            // Full-image geometric consistency for one augmented draw:
            // projected joints land on the rendered figure via the updated
            // transform (checked against an isolated wrist blob).
            let sf = dataset.sample(PersonId::A, 2, 64, Some(aug)).unwrap();
            let p2 = project(&pose, &manifest.cameras[0]).unwrap();
            let crop_px = sf.crop_transforms[0].frame_to_crop(p2.points[9]);
            if let Some(c) = local_centroid(&sf.images[0], crop_px, 4.5) {
                let err = ((c[0] - crop_px[0]).powi(2) + (c[1] - crop_px[1]).powi(2)).sqrt();
                assert!(err < 1.5, "augmented geometry err {err}");
            }
        }
    }
}

#[test]
fn manifest_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let synth = tiny_synth();
    let manifest = synth_scene(&synth, 31, dir.path()).unwrap();
    let reread = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest, reread);

    // A manifest referencing an unknown camera fails validation.
    let mut broken = manifest.clone();
    broken
        .persons
        .get_mut("a")
        .unwrap()
        .get_mut(0)
        .unwrap()
        .images
        .insert("ghost".into(), "nope.png".into());
    assert!(broken.validate().is_err());
}

// ---------------------------------------------------------------- panoptic

/// Writes a miniature CMU-Panoptic-format tree: calibration, coco19 pose
/// files, and frame images.
fn write_panoptic_fixture(root: &Path, frames: usize, drop_frame_in_view1: Option<usize>) {
    let cams = mvpt_core::data::ring_cameras(2, 64, 300.0);
    let mut cam_entries = Vec::new();
    for (i, cam) in cams.iter().enumerate() {
        let (k, r) = cam.decompose_kr().unwrap();
        // t = K^-1 * P[:,3]
        let p4 = cam.projection.column(3);
        let kinv = k.try_inverse().unwrap();
        let t = kinv * p4;
        cam_entries.push(serde_json::json!({
            "name": format!("00_{i:02}"),
            "type": "hd",
            "resolution": [64, 64],
            "K": [[k[(0,0)], k[(0,1)], k[(0,2)]], [0.0, k[(1,1)], k[(1,2)]], [0.0, 0.0, 1.0]],
            "distCoef": [0.0, 0.0, 0.0, 0.0, 0.0],
            "R": [[r[(0,0)], r[(0,1)], r[(0,2)]], [r[(1,0)], r[(1,1)], r[(1,2)]], [r[(2,0)], r[(2,1)], r[(2,2)]]],
            "t": [[t[0]], [t[1]], [t[2]]],
        }));
    }
    let calib = serde_json::json!({
        "calibDataSource": "fixture",
        "cameras": cam_entries,
    });
    std::fs::write(
        root.join("calibration_fixture.json"),
        serde_json::to_string_pretty(&calib).unwrap(),
    )
    .unwrap();

    let pose_dir = root.join("hdPose3d_stage1_coco19");
    std::fs::create_dir_all(&pose_dir).unwrap();
    for cam_dir in ["00_00", "00_01"] {
        std::fs::create_dir_all(root.join("hdImgs").join(cam_dir)).unwrap();
    }
    // Panoptic coco19 order (neck, nose, body center, left arm/leg chain,
    // right arm/leg chain, face): build a plausible skeleton around the
    // camera target.
    for f in 0..frames {
        let mut bodies = Vec::new();
        for id in 0..2i64 {
            let dx = id as f64 * 25.0 + (f as f64) * 0.5;
            let joints19: Vec<f64> = (0..19)
                .flat_map(|j| {
                    let spread = (j as f64 * 1.3).sin() * 22.0;
                    let height = 165.0 - (j as f64 * 8.0);
                    vec![dx + spread, height, (j as f64 * 0.7).cos() * 18.0, 0.9]
                })
                .collect();
            bodies.push(serde_json::json!({"id": id, "joints19": joints19}));
        }
        std::fs::write(
            pose_dir.join(format!("body3DScene_{f:08}.json")),
            serde_json::to_string(&serde_json::json!({"version": 0.7, "bodies": bodies})).unwrap(),
        )
        .unwrap();
        for (i, cam_dir) in ["00_00", "00_01"].iter().enumerate() {
            if drop_frame_in_view1 == Some(f) && i == 1 {
                continue;
            }
            let img = ImageTensor::zeros(64, 64);
            let path = root
                .join("hdImgs")
                .join(cam_dir)
                .join(format!("{cam_dir}_{f:08}.jpg"));
            image::save_buffer(&path, &img.to_rgb8(), 64, 64, image::ExtendedColorType::Rgb8)
                .unwrap();
        }
    }
}

#[test]
fn panoptic_ingest_parses_maps_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    write_panoptic_fixture(dir.path(), 5, Some(3));
    let specs = [
        PanopticPersonSpec {
            person: PersonId::A,
            body_id: 0,
        },
        PanopticPersonSpec {
            person: PersonId::B,
            body_id: 1,
        },
    ];
    let cameras = vec!["00_00".to_string(), "00_01".to_string()];
    let (manifest, report) = ingest_panoptic(dir.path(), &cameras, &specs).unwrap();
    manifest.validate().unwrap();
    // Frame 3 lacks view 00_01 -> dropped once per person.
    assert_eq!(report.dropped_missing_view, 2);
    assert_eq!(report.frames_used, 8);
    assert!(
        report.reprojection_in_bounds >= 0.99,
        "reprojection sanity: {}",
        report.reprojection_in_bounds
    );

    // Idempotence: a second run reproduces the manifest exactly.
    let (again, _) = ingest_panoptic(dir.path(), &cameras, &specs).unwrap();
    assert_eq!(manifest, again);

    // Missing camera id names the offender.
    let bad = vec!["00_00".to_string(), "99_99".to_string()];
    match ingest_panoptic(dir.path(), &bad, &specs) {
        Err(mvpt_core::Error::MissingCamera(id)) => assert_eq!(id, "99_99"),
        other => panic!("expected missing camera, got {other:?}"),
    }
}

#[test]
fn panoptic_manifest_loads_as_dataset() {
    let dir = tempfile::tempdir().unwrap();
    write_panoptic_fixture(dir.path(), 4, None);
    let specs = [
        PanopticPersonSpec {
            person: PersonId::A,
            body_id: 0,
        },
        PanopticPersonSpec {
            person: PersonId::B,
            body_id: 1,
        },
    ];
    let cameras = vec!["00_00".to_string(), "00_01".to_string()];
    let (manifest, _) = ingest_panoptic(dir.path(), &cameras, &specs).unwrap();
    let dataset = Dataset::from_manifest(manifest, dir.path().to_path_buf()).unwrap();
    let sample = dataset.sample(PersonId::A, 0, 32, None).unwrap();
    assert_eq!(sample.images.len(), 2);
    assert_eq!(sample.images[0].height(), 32);
    // Out-of-range frame index is a structured error.
    assert!(matches!(
        dataset.sample(PersonId::A, 99, 32, None),
        Err(mvpt_core::Error::FrameOutOfRange { t: 99, len: 4 })
    ));
    let _ = BTreeMap::<String, String>::new();
}
