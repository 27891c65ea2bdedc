//! Manual detector diagnostics (run with --ignored --nocapture).

use std::sync::Arc;

use mvpt_core::autodiff::Graph;
use mvpt_core::config::RunConfigFile;
use mvpt_core::data::{Dataset, PersonId};
use mvpt_core::geometry::{COCO17_JOINT_NAMES, NUM_JOINTS};
use mvpt_core::models::TranslationModelSet;
use mvpt_core::trainer::{pretrain_detector, DetectorPretrainConfig};

#[test]
#[ignore]
fn per_joint_detector_errors() {
    let manifest_path = std::path::Path::new("/tmp/pilot/data/manifest.json");
    if !manifest_path.exists() {
        eprintln!("pilot dataset missing; skip");
        return;
    }
    let dataset = Arc::new(Dataset::open(manifest_path).unwrap());
    let mut cfg = RunConfigFile::default();
    cfg.model.det_base_channels = 16;
    cfg.model.softargmax_temperature = 30.0;
    let mut models =
        TranslationModelSet::<f32>::new(cfg.model.to_model_config(64), dataset.manifest.cameras.clone(), 7)
            .unwrap();
    let err = pretrain_detector(
        &mut models,
        &dataset,
        0.1,
        7,
        DetectorPretrainConfig {
            epochs: 14,
            lr: 2e-3,
            coord_weight: 1.0,
        },
    )
    .unwrap();
    println!("held-out mean: {err:.3}px");

    let mut sums = vec![0.0f64; NUM_JOINTS];
    let mut maxs = vec![0.0f64; NUM_JOINTS];
    let mut n = 0usize;
    for person in [PersonId::A, PersonId::B] {
        let frames = dataset.manifest.num_frames(person);
        let (_, eval) = mvpt_core::data::train_eval_split(frames, 0.1);
        for t in eval {
            let sample = dataset.sample(person, t, 64, None).unwrap();
            for vi in 0..2 {
                let mut g: Graph<f32> = Graph::new();
                let bound = models.detector.params.bind(&mut g, false);
                let img = sample.images[vi].to_graph(&mut g);
                let det = models.detector.detect(&mut g, &bound, img);
                for j in 0..NUM_JOINTS {
                    let dx = g.value(det.xs)[[j]] as f64 - sample.gt_pose2d_crop[vi].points[j][0];
                    let dy = g.value(det.ys)[[j]] as f64 - sample.gt_pose2d_crop[vi].points[j][1];
                    let d = (dx * dx + dy * dy).sqrt();
                    sums[j] += d;
                    maxs[j] = maxs[j].max(d);
                }
                // Swap check: distance of the left-wrist prediction to the
                // RIGHT wrist ground truth.
                let lw = 9usize;
                let rw = 10usize;
                let dxs = g.value(det.xs)[[lw]] as f64 - sample.gt_pose2d_crop[vi].points[rw][0];
                let dys = g.value(det.ys)[[lw]] as f64 - sample.gt_pose2d_crop[vi].points[rw][1];
                let cross = (dxs * dxs + dys * dys).sqrt();
                let dxo = g.value(det.xs)[[lw]] as f64 - sample.gt_pose2d_crop[vi].points[lw][0];
                let dyo = g.value(det.ys)[[lw]] as f64 - sample.gt_pose2d_crop[vi].points[lw][1];
                let own = (dxo * dxo + dyo * dyo).sqrt();
                if cross < own {
                    println!("  swap? t={t} view {vi}: own {own:.1} cross {cross:.1}");
                }
                n += 1;
            }
        }
    }
    for j in 0..NUM_JOINTS {
        println!(
            "{:>14}: mean {:5.2}px max {:5.2}px",
            COCO17_JOINT_NAMES[j],
            sums[j] / n as f64,
            maxs[j]
        );
    }
}

#[test]
#[ignore]
fn estimator_floor_on_real_images() {
    let manifest_path = std::path::Path::new("/tmp/pilot/data/manifest.json");
    let dataset = Arc::new(Dataset::open(manifest_path).unwrap());
    let det = mvpt_core::trainer::read_tensors::<f32>(std::path::Path::new(
        "/tmp/pilot/joint/detector.bin",
    ))
    .unwrap();
    let mut models = TranslationModelSet::<f32>::new(
        {
            let mut cfg = RunConfigFile::default();
            cfg.model.det_base_channels = 16;
            cfg.model.softargmax_temperature = 30.0;
            cfg.model.to_model_config(64)
        },
        dataset.manifest.cameras.clone(),
        7,
    )
    .unwrap();
    models.detector.params.load_values(det).unwrap();

    let mut worst = 0.0f64;
    let mut sum = 0.0f64;
    let mut n = 0;
    for person in [PersonId::A, PersonId::B] {
        let frames = dataset.manifest.num_frames(person);
        let (_, eval) = mvpt_core::data::train_eval_split(frames, 0.1);
        for t in eval {
            let sample = dataset.sample(person, t, 64, None).unwrap();
            let refs: Vec<&mvpt_core::models::ImageTensor> = sample.images.iter().collect();
            let (est, _) = mvpt_core::eval::estimate_from_images(
                &models.detector,
                &refs,
                &dataset.manifest.cameras,
                &sample.crop_transforms,
            )
            .unwrap();
            let d = mvpt_core::eval::mpjpe(&est, &sample.gt_pose).unwrap();
            sum += d;
            worst = worst.max(d);
            n += 1;
        }
    }
    println!("estimator floor: mean {:.2} cm, worst {:.2} cm over {n} tuples", sum / n as f64, worst);
}
