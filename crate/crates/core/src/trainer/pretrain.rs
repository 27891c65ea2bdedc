//! Detector pretraining on the synthetic dataset: per-joint heatmap
//! cross-entropy to the ground-truth grid cell plus a subpixel coordinate
//! term through the soft-argmax. The result becomes the frozen 2D stage of
//! the pose estimator.

use std::sync::Arc;

use ndarray::ArrayD;
use rand::seq::SliceRandom;

use crate::autodiff::{Graph, Scalar};
use crate::data::{Dataset, PersonId};
use crate::error::Result;
use crate::geometry::NUM_JOINTS;
use crate::models::{crop_px_to_grid, KeypointDetector, TranslationModelSet};
use crate::seeding;
use crate::trainer::AdamState;

#[derive(Debug, Clone, Copy)]
pub struct DetectorPretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the subpixel coordinate term relative to the cell
    /// cross-entropy.
    pub coord_weight: f64,
}

impl Default for DetectorPretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            lr: 2e-3,
            coord_weight: 1.0,
        }
    }
}

fn detector_loss<T: Scalar>(
    g: &mut Graph<T>,
    detector: &KeypointDetector<T>,
    bound: &crate::models::Bound,
    image: crate::autodiff::Tid,
    gt_crop_px: &[[f64; 2]],
    valid: &[bool],
    resolution: usize,
    coord_weight: f64,
) -> crate::autodiff::Tid {
    let (det, logits) = detector.detect_with_logits(g, bound, image);
    let grid = resolution / crate::models::DETECTOR_STRIDE;
    let cells: Vec<(usize, usize)> = gt_crop_px
        .iter()
        .map(|p| {
            let gx = crop_px_to_grid(p[0]).round().clamp(0.0, (grid - 1) as f64) as usize;
            let gy = crop_px_to_grid(p[1]).round().clamp(0.0, (grid - 1) as f64) as usize;
            (gy, gx)
        })
        .collect();
    let mask = ArrayD::from_shape_vec(
        vec![NUM_JOINTS],
        valid
            .iter()
            .map(|&v| if v { T::one() } else { T::zero() })
            .collect(),
    )
    .expect("mask");
    let n_valid = valid.iter().filter(|v| **v).count().max(1);

    // Stable softmax cross-entropy on the raw logits at the target cell.
    let ce_all = g.ce_cells(logits, &cells);
    let ce_masked = g.mul_const(ce_all, mask.clone());
    let ce_sum = g.sum_all(ce_masked);
    let ce = g.scale(ce_sum, T::cast_from(1.0 / n_valid as f64));

    // Subpixel coordinate error through the inference-path soft-argmax,
    // normalized by the crop size.
    let gt_x = ArrayD::from_shape_vec(
        vec![NUM_JOINTS],
        gt_crop_px.iter().map(|p| T::cast_from(p[0])).collect(),
    )
    .expect("gt x");
    let gt_y = ArrayD::from_shape_vec(
        vec![NUM_JOINTS],
        gt_crop_px.iter().map(|p| T::cast_from(p[1])).collect(),
    )
    .expect("gt y");
    let cx = g.constant(gt_x);
    let cy = g.constant(gt_y);
    let dx = g.sub(det.xs, cx);
    let dy = g.sub(det.ys, cy);
    let dx = g.mul_const(dx, mask.clone());
    let dy = g.mul_const(dy, mask);
    let sx = g.square(dx);
    let sy = g.square(dy);
    let sq = g.add(sx, sy);
    let sum = g.sum_all(sq);
    let coord = g.scale(
        sum,
        T::cast_from(coord_weight / (n_valid as f64 * (resolution * resolution) as f64)),
    );
    g.add(ce, coord)
}

/// Trains the detector in place over the train split of both persons and
/// returns the held-out mean pixel error (valid joints, all views).
pub fn pretrain_detector<T: Scalar>(
    models: &mut TranslationModelSet<T>,
    dataset: &Arc<Dataset>,
    holdout_frac: f64,
    seed: u64,
    cfg: DetectorPretrainConfig,
) -> Result<f64> {
    let resolution = models.cfg.resolution;
    let mut adam = AdamState::new(&models.detector.params);
    let cam_count = models.cameras.len();
    let cam_indices: Vec<usize> = models
        .cameras
        .iter()
        .map(|c| {
            dataset
                .manifest
                .cameras
                .iter()
                .position(|m| m.view_id == c.view_id)
                .expect("trainer cameras come from the manifest")
        })
        .collect();

    for epoch in 0..cfg.epochs {
        // Interleave both persons' train frames in one shuffled order.
        let mut items: Vec<(PersonId, usize)> = Vec::new();
        for person in [PersonId::A, PersonId::B] {
            let n = dataset.manifest.num_frames(person);
            let (train, _) = crate::data::train_eval_split(n, holdout_frac);
            items.extend(train.map(|t| (person, t)));
        }
        let mut rng = seeding::derive_rng(seed, &["det_pretrain", "order"], &[epoch as u64]);
        items.shuffle(&mut rng);
        // Halve the rate each third of the run.
        let lr = cfg.lr * 0.5f64.powi((3 * epoch / cfg.epochs.max(1)) as i32);
        for (step, (person, t)) in items.into_iter().enumerate() {
            let aug = crate::data::AugmentSeed {
                seed: seed ^ 0x5e7e_c7ab,
                epoch: epoch as u64,
                step: step as u64,
            };
            let sample = dataset.sample(person, t, resolution, Some(aug))?;
            for vi in 0..cam_count {
                let img = &sample.images[cam_indices[vi]];
                let gt = &sample.gt_pose2d_crop[cam_indices[vi]];
                let valid: Vec<bool> = gt.confidence.iter().map(|c| *c > 0.0).collect();
                if !valid.iter().any(|v| *v) {
                    continue;
                }
                let mut g: Graph<T> = Graph::new();
                let bound = models.detector.params.bind(&mut g, true);
                let image = img.to_graph(&mut g);
                let loss = detector_loss(
                    &mut g,
                    &models.detector,
                    &bound,
                    image,
                    &gt.points,
                    &valid,
                    resolution,
                    cfg.coord_weight,
                );
                let grads = g.backward(loss);
                let grad_vec: Vec<Option<ArrayD<T>>> = bound
                    .ids
                    .iter()
                    .map(|id| grads.get(*id).cloned())
                    .collect();
                adam.step(&mut models.detector.params, &grad_vec, lr, 0.9, 0.999);
            }
        }
    }
    heldout_pixel_error(models, dataset, holdout_frac, &cam_indices)
}

/// Mean distance in crop pixels between detections and ground truth over
/// the held-out frames.
pub fn heldout_pixel_error<T: Scalar>(
    models: &TranslationModelSet<T>,
    dataset: &Arc<Dataset>,
    holdout_frac: f64,
    cam_indices: &[usize],
) -> Result<f64> {
    let resolution = models.cfg.resolution;
    let mut sum = 0.0;
    let mut n = 0usize;
    for person in [PersonId::A, PersonId::B] {
        let frames = dataset.manifest.num_frames(person);
        let (_, eval) = crate::data::train_eval_split(frames, holdout_frac);
        for t in eval {
            let sample = dataset.sample(person, t, resolution, None)?;
            for &ci in cam_indices {
                let img = &sample.images[ci];
                let gt = &sample.gt_pose2d_crop[ci];
                let mut g: Graph<T> = Graph::new();
                let bound = models.detector.params.bind(&mut g, false);
                let image = img.to_graph(&mut g);
                let det = models.detector.detect(&mut g, &bound, image);
                for j in 0..NUM_JOINTS {
                    if gt.confidence[j] <= 0.0 {
                        continue;
                    }
                    let dx = g.value(det.xs)[[j]].cast_f64() - gt.points[j][0];
                    let dy = g.value(det.ys)[[j]].cast_f64() - gt.points[j][1];
                    sum += (dx * dx + dy * dy).sqrt();
                    n += 1;
                }
            }
        }
    }
    Ok(sum / n.max(1) as f64)
}
