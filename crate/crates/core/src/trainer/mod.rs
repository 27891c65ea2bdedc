//! Joint min-max optimization of all per-view translation models under the
//! shared objective: generator phase first (all views in one graph, the 3D
//! term coupling them when its weight is positive), then one update per
//! discriminator against pooled fakes. Nothing here ever writes to the
//! detector's parameters.

mod adam;
mod checkpoint;
mod metrics;
mod pool;
mod pretrain;
mod schedule;

pub use adam::AdamState;
pub use checkpoint::{read_tensors, write_tensors, CheckpointManifest};
pub use metrics::{read_metrics, MetricsWriter, StepRecord};
pub use pool::ImagePool;
pub use pretrain::{heldout_pixel_error, pretrain_detector, DetectorPretrainConfig};
pub use schedule::lr_schedule;

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array3, ArrayD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Scalar};
use crate::data::{Dataset, MultiViewSample, PersonId};
use crate::error::{Error, Result};
use crate::geometry::LimbProfile;
use crate::losses::{
    cycle_loss, gan_discriminator_term, gan_generator_term, identity_loss, per_view_objective,
    pose_3d_loss, total_objective, LossWeights, ViewLossReport,
};
use crate::models::{
    Bound, CropTransform, Discriminator, ImageTensor, ModelConfig, ParamSet,
    TranslationModelSet,
};
use crate::seeding;

/// Run-control and optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Epochs at the constant base learning rate.
    pub epochs_constant: usize,
    /// Epochs of linear decay to zero after the constant phase.
    pub epochs_decay: usize,
    /// How many epochs this run actually executes (a smoke run stops early).
    pub epochs_run: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub resolution: usize,
    pub pool_size: usize,
    /// Fraction of trailing frames held out per person.
    pub holdout_frac: f64,
    /// Save a checkpoint every this many epochs (and always at the end).
    pub checkpoint_interval: usize,
    pub augment: bool,
    /// Train only these views (camera ids); `None` means all manifest
    /// cameras. Single-view subsets require `lambda4 = 0`.
    pub views: Option<Vec<String>>,
    /// Gate for discriminator updates (used by update-discipline tests).
    pub update_discriminators: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_constant: 100,
            epochs_decay: 200,
            epochs_run: 300,
            base_lr: 2e-4,
            batch_size: 1,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            resolution: 128,
            pool_size: 50,
            holdout_frac: 0.1,
            checkpoint_interval: 5,
            augment: true,
            views: None,
            update_discriminators: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, weights: &LossWeights) -> Result<()> {
        weights.validate()?;
        if self.epochs_run == 0 || self.epochs_run > self.epochs_constant + self.epochs_decay {
            return Err(Error::Config(format!(
                "epochs_run {} outside 1..={}",
                self.epochs_run,
                self.epochs_constant + self.epochs_decay
            )));
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::Config("base_lr must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.resolution % 4 != 0 || self.resolution < 16 {
            return Err(Error::Config(format!(
                "resolution {} must be >= 16 and divisible by 4",
                self.resolution
            )));
        }
        if !(0.0 < self.holdout_frac && self.holdout_frac < 0.5) {
            return Err(Error::Config("holdout_frac must be in (0, 0.5)".into()));
        }
        if let Some(views) = &self.views {
            if views.len() < 2 && weights.lambda4 > 0.0 {
                return Err(Error::Config(
                    "single-view training requires lambda4 = 0".into(),
                ));
            }
            if views.is_empty() {
                return Err(Error::Config("views list must not be empty".into()));
            }
        }
        Ok(())
    }
}

/// Per-step loss values written to the metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub views: Vec<ViewLossReport>,
    pub l3d_a_to_b: Option<f64>,
    pub l3d_b_to_a: Option<f64>,
    pub total: f64,
}

pub struct Trainer<T: Scalar> {
    pub cfg: TrainConfig,
    pub weights: LossWeights,
    pub models: TranslationModelSet<T>,
    pub dataset: Arc<Dataset>,
    pub profile_a: LimbProfile,
    pub profile_b: LimbProfile,
    pub config_hash: String,
    /// Manifest camera index per model view.
    cam_indices: Vec<usize>,
    adam_g: Vec<(AdamState<T>, AdamState<T>)>,
    adam_d: Vec<(AdamState<T>, AdamState<T>)>,
    pools: Vec<(ImagePool, ImagePool)>,
    pub epoch: usize,
    pub step: usize,
}

struct GPhaseOut {
    views: Vec<ViewLossReport>,
    l3d_a_to_b: Option<f64>,
    l3d_b_to_a: Option<f64>,
    total: f64,
    /// Fake images per view: (fake_a from B, fake_b from A).
    fakes: Vec<(Array3<f32>, Array3<f32>)>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(
        cfg: TrainConfig,
        weights: LossWeights,
        model_cfg: ModelConfig,
        dataset: Arc<Dataset>,
        config_hash: String,
    ) -> Result<Self> {
        cfg.validate(&weights)?;
        let manifest = &dataset.manifest;
        let camera_ids: Vec<String> = match &cfg.views {
            Some(ids) => ids.clone(),
            None => manifest.cameras.iter().map(|c| c.view_id.clone()).collect(),
        };
        let mut cam_indices = Vec::with_capacity(camera_ids.len());
        let mut cameras = Vec::with_capacity(camera_ids.len());
        for id in &camera_ids {
            let idx = manifest
                .cameras
                .iter()
                .position(|c| &c.view_id == id)
                .ok_or_else(|| Error::MissingCamera(id.clone()))?;
            cam_indices.push(idx);
            cameras.push(manifest.cameras[idx].clone());
        }
        let model_cfg = ModelConfig {
            resolution: cfg.resolution,
            ..model_cfg
        };
        let models = TranslationModelSet::new(model_cfg, cameras, cfg.seed)?;

        let n_a = manifest.num_frames(PersonId::A);
        let n_b = manifest.num_frames(PersonId::B);
        let (train_a, _) = crate::data::train_eval_split(n_a, cfg.holdout_frac);
        let (train_b, _) = crate::data::train_eval_split(n_b, cfg.holdout_frac);
        let profile_a = dataset.limb_profile_over(PersonId::A, train_a)?;
        let profile_b = dataset.limb_profile_over(PersonId::B, train_b)?;

        let adam_g = models
            .views
            .iter()
            .map(|v| (AdamState::new(&v.gen_to_a.params), AdamState::new(&v.gen_to_b.params)))
            .collect();
        let adam_d = models
            .views
            .iter()
            .map(|v| (AdamState::new(&v.disc_a.params), AdamState::new(&v.disc_b.params)))
            .collect();
        let pools = models
            .views
            .iter()
            .map(|_| (ImagePool::new(cfg.pool_size), ImagePool::new(cfg.pool_size)))
            .collect();
        Ok(Self {
            cfg,
            weights,
            models,
            dataset,
            profile_a,
            profile_b,
            config_hash,
            cam_indices,
            adam_g,
            adam_d,
            pools,
            epoch: 0,
            step: 0,
        })
    }

    /// Manifest camera index of model view `vi`.
    pub fn cam_index(&self, vi: usize) -> usize {
        self.cam_indices[vi]
    }

    pub fn train_range(&self, person: PersonId) -> std::ops::Range<usize> {
        let n = self.dataset.manifest.num_frames(person);
        crate::data::train_eval_split(n, self.cfg.holdout_frac).0
    }

    pub fn eval_range(&self, person: PersonId) -> std::ops::Range<usize> {
        let n = self.dataset.manifest.num_frames(person);
        crate::data::train_eval_split(n, self.cfg.holdout_frac).1
    }

    fn subset_images(&self, sample: &MultiViewSample) -> Vec<ImageTensor> {
        self.cam_indices
            .iter()
            .map(|&i| sample.images[i].clone())
            .collect()
    }

    fn subset_crops(&self, sample: &MultiViewSample) -> Vec<CropTransform> {
        self.cam_indices.iter().map(|&i| sample.crop_transforms[i]).collect()
    }

    /// The generator phase for one unpaired sample pair: one tape spanning
    /// all views plus (when `lambda4 > 0`) the two directional 3D terms.
    fn generator_phase(
        &self,
        sample_a: &MultiViewSample,
        sample_b: &MultiViewSample,
        grad_accum: &mut [(Vec<Option<ArrayD<T>>>, Vec<Option<ArrayD<T>>>)],
        inv_batch: f64,
    ) -> Result<GPhaseOut> {
        let w = &self.weights;
        let mut g: Graph<T> = Graph::new();
        let images_a = self.subset_images(sample_a);
        let images_b = self.subset_images(sample_b);

        let binds: Vec<(Bound, Bound, Bound, Bound)> = self
            .models
            .views
            .iter()
            .map(|v| {
                (
                    v.gen_to_a.params.bind(&mut g, true),
                    v.gen_to_b.params.bind(&mut g, true),
                    v.disc_a.params.bind(&mut g, false),
                    v.disc_b.params.bind(&mut g, false),
                )
            })
            .collect();
        let det_bound = self.models.detector.params.bind(&mut g, false);

        let mut view_totals = Vec::with_capacity(self.models.views.len());
        let mut reports = Vec::with_capacity(self.models.views.len());
        let mut fakes_a_ids = Vec::with_capacity(self.models.views.len());
        let mut fakes_b_ids = Vec::with_capacity(self.models.views.len());
        for (vi, view) in self.models.views.iter().enumerate() {
            let (gen_a_bound, gen_b_bound, disc_a_bound, disc_b_bound) = &binds[vi];
            let real_a = images_a[vi].to_graph(&mut g);
            let real_b = images_b[vi].to_graph(&mut g);
            let fake_b = view.gen_to_b.forward(&mut g, gen_b_bound, real_a);
            let fake_a = view.gen_to_a.forward(&mut g, gen_a_bound, real_b);
            let rec_a = view.gen_to_a.forward(&mut g, gen_a_bound, fake_b);
            let rec_b = view.gen_to_b.forward(&mut g, gen_b_bound, fake_a);
            let cyc_a = cycle_loss(&mut g, real_a, rec_a)?;
            let cyc_b = cycle_loss(&mut g, real_b, rec_b)?;
            let cycle = g.add(cyc_a, cyc_b);
            let d_a_fake = view.disc_a.forward(&mut g, disc_a_bound, fake_a);
            let d_b_fake = view.disc_b.forward(&mut g, disc_b_bound, fake_b);
            let adv_a = gan_generator_term(&mut g, d_a_fake, w.gan_mode, w.gen_adv)?;
            let adv_b = gan_generator_term(&mut g, d_b_fake, w.gan_mode, w.gen_adv)?;
            let (id_a, id_b) = if w.lambda3 > 0.0 {
                let idt_a = view.gen_to_a.forward(&mut g, gen_a_bound, real_a);
                let idt_b = view.gen_to_b.forward(&mut g, gen_b_bound, real_b);
                (
                    identity_loss(&mut g, real_a, idt_a)?,
                    identity_loss(&mut g, real_b, idt_b)?,
                )
            } else {
                let zero = g.constant(ArrayD::zeros(Vec::<usize>::new()));
                (zero, zero)
            };
            let total = per_view_objective(&mut g, cycle, (adv_a, adv_b), (id_a, id_b), w);
            reports.push(ViewLossReport {
                view_id: view.view_id.clone(),
                gan_g: (g.scalar(adv_a) + g.scalar(adv_b)).cast_f64(),
                gan_d: f64::NAN, // filled by the discriminator phase
                cycle: g.scalar(cycle).cast_f64(),
                identity: (g.scalar(id_a) + g.scalar(id_b)).cast_f64(),
                per_view_total: g.scalar(total).cast_f64(),
            });
            view_totals.push(total);
            fakes_a_ids.push(fake_a);
            fakes_b_ids.push(fake_b);
        }

        let mut l3d_a_to_b = None;
        let mut l3d_b_to_a = None;
        let pose_terms = if w.lambda4 > 0.0 {
            let ab = pose_3d_loss(
                &mut g,
                &self.models.detector,
                &det_bound,
                &fakes_b_ids,
                &self.models.cameras,
                &self.subset_crops(sample_a),
                &sample_a.gt_pose,
                &self.profile_b,
                self.dataset.skeleton(),
                w.epsilon,
            )?;
            let ba = pose_3d_loss(
                &mut g,
                &self.models.detector,
                &det_bound,
                &fakes_a_ids,
                &self.models.cameras,
                &self.subset_crops(sample_b),
                &sample_b.gt_pose,
                &self.profile_a,
                self.dataset.skeleton(),
                w.epsilon,
            )?;
            l3d_a_to_b = Some(g.scalar(ab.loss).cast_f64());
            l3d_b_to_a = Some(g.scalar(ba.loss).cast_f64());
            Some((ab.loss, ba.loss))
        } else {
            None
        };
        let total = total_objective(&mut g, &view_totals, pose_terms, w);
        let total_v = g.scalar(total).cast_f64();

        let trace = std::env::var("MVPT_TRACE").is_ok();
        let t_fwd_done = std::time::Instant::now();
        let grads = g.backward(total);
        if trace { eprintln!("  backward: {:?} (graph {} nodes)", t_fwd_done.elapsed(), g.len()); }
        let scale = T::cast_from(inv_batch);
        for (vi, view) in self.models.views.iter().enumerate() {
            let (gen_a_bound, gen_b_bound, _, _) = &binds[vi];
            accumulate(&mut grad_accum[vi].0, &view.gen_to_a.params, gen_a_bound, &grads, scale);
            accumulate(&mut grad_accum[vi].1, &view.gen_to_b.params, gen_b_bound, &grads, scale);
        }

        let mut fakes = Vec::with_capacity(self.models.views.len());
        for vi in 0..self.models.views.len() {
            let fa = ImageTensor::from_graph(&g, fakes_a_ids[vi])?;
            let fb = ImageTensor::from_graph(&g, fakes_b_ids[vi])?;
            fakes.push((fa.data().clone(), fb.data().clone()));
        }
        Ok(GPhaseOut {
            views: reports,
            l3d_a_to_b,
            l3d_b_to_a,
            total: total_v,
            fakes,
        })
    }

    /// One discriminator update from a real image and a pooled fake.
    fn discriminator_update(
        disc: &mut Discriminator<T>,
        adam: &mut AdamState<T>,
        real_images: &[&ImageTensor],
        fake_images: &[Array3<f32>],
        lr: f64,
        beta: (f64, f64),
        mode: crate::losses::GanMode,
        gen_adv: crate::losses::GenAdvVariant,
    ) -> Result<f64> {
        let inv = 1.0 / real_images.len() as f64;
        let mut accum: Vec<Option<ArrayD<T>>> = vec![None; disc.params.len()];
        let mut value = 0.0;
        for (real, fake) in real_images.iter().zip(fake_images) {
            let mut g: Graph<T> = Graph::new();
            let bound = disc.params.bind(&mut g, true);
            let real_id = real.to_graph(&mut g);
            let fake_id = g.constant(fake.mapv(|v| T::cast_from(v as f64)).into_dyn());
            let d_real = disc.forward(&mut g, &bound, real_id);
            let d_fake = disc.forward(&mut g, &bound, fake_id);
            let _ = gen_adv;
            let d_term = gan_discriminator_term(&mut g, d_real, d_fake, mode)?;
            value += g.scalar(d_term).cast_f64() * inv;
            let grads = g.backward(d_term);
            accumulate(&mut accum, &disc.params, &bound, &grads, T::cast_from(inv));
        }
        adam.step(&mut disc.params, &accum, lr, beta.0, beta.1);
        Ok(value)
    }

    /// One optimizer step over a batch of unpaired sample pairs: generator
    /// phase (all views jointly), then one update per discriminator fed from
    /// its image pool. Aborts with a diagnostic dump on non-finite losses.
    pub fn train_step(
        &mut self,
        batch: &[(MultiViewSample, MultiViewSample)],
        lr: f64,
        dump_dir: Option<&Path>,
    ) -> Result<StepReport> {
        assert!(!batch.is_empty());
        let inv_batch = 1.0 / batch.len() as f64;
        let n_views = self.models.views.len();
        let mut grad_accum: Vec<(Vec<Option<ArrayD<T>>>, Vec<Option<ArrayD<T>>>)> = self
            .models
            .views
            .iter()
            .map(|v| {
                (
                    vec![None; v.gen_to_a.params.len()],
                    vec![None; v.gen_to_b.params.len()],
                )
            })
            .collect();

        let trace = std::env::var("MVPT_TRACE").is_ok();
        let t_g = std::time::Instant::now();
        let mut reports: Vec<ViewLossReport> = Vec::new();
        let mut l3d_ab_sum = 0.0;
        let mut l3d_ba_sum = 0.0;
        let mut has_l3d = false;
        let mut total_sum = 0.0;
        let mut batch_fakes: Vec<Vec<(Array3<f32>, Array3<f32>)>> = Vec::with_capacity(batch.len());
        for (sample_a, sample_b) in batch {
            let out = self.generator_phase(sample_a, sample_b, &mut grad_accum, inv_batch)?;
            self.check_finite(&out, batch, dump_dir)?;
            if reports.is_empty() {
                reports = out
                    .views
                    .iter()
                    .map(|r| ViewLossReport {
                        gan_d: 0.0,
                        gan_g: r.gan_g * inv_batch,
                        cycle: r.cycle * inv_batch,
                        identity: r.identity * inv_batch,
                        per_view_total: r.per_view_total * inv_batch,
                        view_id: r.view_id.clone(),
                    })
                    .collect();
            } else {
                for (dst, src) in reports.iter_mut().zip(&out.views) {
                    dst.gan_g += src.gan_g * inv_batch;
                    dst.cycle += src.cycle * inv_batch;
                    dst.identity += src.identity * inv_batch;
                    dst.per_view_total += src.per_view_total * inv_batch;
                }
            }
            if let (Some(ab), Some(ba)) = (out.l3d_a_to_b, out.l3d_b_to_a) {
                has_l3d = true;
                l3d_ab_sum += ab * inv_batch;
                l3d_ba_sum += ba * inv_batch;
            }
            total_sum += out.total * inv_batch;
            batch_fakes.push(out.fakes);
        }

        if trace { eprintln!("g_phase: {:?}", t_g.elapsed()); }
        let t_adam = std::time::Instant::now();
        // Apply generator updates.
        for (vi, (ga, gb)) in grad_accum.iter().enumerate() {
            let view = &mut self.models.views[vi];
            self.adam_g[vi]
                .0
                .step(&mut view.gen_to_a.params, ga, lr, self.cfg.beta1, self.cfg.beta2);
            self.adam_g[vi]
                .1
                .step(&mut view.gen_to_b.params, gb, lr, self.cfg.beta1, self.cfg.beta2);
        }

        if trace { eprintln!("adam_g: {:?}", t_adam.elapsed()); }
        let t_d = std::time::Instant::now();
        // Discriminator phase.
        if self.cfg.update_discriminators {
            for vi in 0..n_views {
                let cam_idx = self.cam_indices[vi];
                // D_A judges domain-A images (real person-A crops), D_B
                // domain-B ones.
                let reals_a: Vec<&ImageTensor> =
                    batch.iter().map(|(sa, _)| &sa.images[cam_idx]).collect();
                let reals_b: Vec<&ImageTensor> =
                    batch.iter().map(|(_, sb)| &sb.images[cam_idx]).collect();

                let view_id = self.models.views[vi].view_id.clone();
                let mut pool_rng_a = seeding::derive_rng(
                    self.cfg.seed,
                    &["pool", &format!("d_a_{view_id}")],
                    &[self.step as u64],
                );
                let mut pool_rng_b = seeding::derive_rng(
                    self.cfg.seed,
                    &["pool", &format!("d_b_{view_id}")],
                    &[self.step as u64],
                );
                let pooled_a: Vec<Array3<f32>> = batch_fakes
                    .iter()
                    .map(|per_view| self.pools[vi].0.query(per_view[vi].0.clone(), &mut pool_rng_a))
                    .collect();
                let pooled_b: Vec<Array3<f32>> = batch_fakes
                    .iter()
                    .map(|per_view| self.pools[vi].1.query(per_view[vi].1.clone(), &mut pool_rng_b))
                    .collect();

                let view = &mut self.models.views[vi];
                let gan_d_a = Self::discriminator_update(
                    &mut view.disc_a,
                    &mut self.adam_d[vi].0,
                    &reals_a,
                    &pooled_a,
                    lr,
                    (self.cfg.beta1, self.cfg.beta2),
                    self.weights.gan_mode,
                    self.weights.gen_adv,
                )?;
                let gan_d_b = Self::discriminator_update(
                    &mut view.disc_b,
                    &mut self.adam_d[vi].1,
                    &reals_b,
                    &pooled_b,
                    lr,
                    (self.cfg.beta1, self.cfg.beta2),
                    self.weights.gan_mode,
                    self.weights.gen_adv,
                )?;
                reports[vi].gan_d = gan_d_a + gan_d_b;
            }
        } else {
            for r in &mut reports {
                r.gan_d = 0.0;
            }
        }

        if trace { eprintln!("d_phase: {:?}", t_d.elapsed()); }
        let report = StepReport {
            step: self.step,
            epoch: self.epoch,
            lr,
            views: reports,
            l3d_a_to_b: has_l3d.then_some(l3d_ab_sum),
            l3d_b_to_a: has_l3d.then_some(l3d_ba_sum),
            total: total_sum,
        };
        self.step += 1;
        Ok(report)
    }

    fn check_finite(
        &self,
        out: &GPhaseOut,
        batch: &[(MultiViewSample, MultiViewSample)],
        dump_dir: Option<&Path>,
    ) -> Result<()> {
        let mut bad: Option<(String, f64)> = None;
        for r in &out.views {
            for (name, v) in [
                ("gan_g", r.gan_g),
                ("cycle", r.cycle),
                ("identity", r.identity),
                ("per_view_total", r.per_view_total),
            ] {
                if !v.is_finite() {
                    bad = Some((format!("{}/{name}", r.view_id), v));
                }
            }
        }
        for (name, v) in [
            ("l3d_a_to_b", out.l3d_a_to_b),
            ("l3d_b_to_a", out.l3d_b_to_a),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    bad = Some((name.to_string(), v));
                }
            }
        }
        if !out.total.is_finite() {
            bad = Some(("total".into(), out.total));
        }
        let Some((term, value)) = bad else {
            return Ok(());
        };
        if let Some(dir) = dump_dir {
            let dump = serde_json::json!({
                "step": self.step,
                "epoch": self.epoch,
                "term": term,
                "value_debug": format!("{value}"),
                "batch": batch
                    .iter()
                    .map(|(a, b)| serde_json::json!({"a_t": a.t, "b_t": b.t}))
                    .collect::<Vec<_>>(),
                "views": out.views,
                "l3d_a_to_b": out.l3d_a_to_b.map(|v| format!("{v}")),
                "l3d_b_to_a": out.l3d_b_to_a.map(|v| format!("{v}")),
            });
            let path = dir.join(format!("abort_step{}.json", self.step));
            let _ = std::fs::write(&path, serde_json::to_string_pretty(&dump).unwrap_or_default());
        }
        Err(Error::NonFiniteLoss {
            step: self.step,
            term,
            value,
        })
    }

    /// Shuffled train-split frame order for one person and epoch, derived
    /// statelessly from the seed.
    pub fn epoch_order(&self, person: PersonId, epoch: usize) -> Vec<usize> {
        let range = self.train_range(person);
        let mut order: Vec<usize> = range.collect();
        let mut rng = seeding::derive_rng(
            self.cfg.seed,
            &["shuffle", person.key()],
            &[epoch as u64],
        );
        order.shuffle(&mut rng);
        order
    }

    fn load_pair(&self, t_a: usize, t_b: usize) -> Result<(MultiViewSample, MultiViewSample)> {
        let aug = self.cfg.augment.then_some(crate::data::AugmentSeed {
            seed: self.cfg.seed,
            epoch: self.epoch as u64,
            step: self.step as u64,
        });
        let a = self.dataset.sample(PersonId::A, t_a, self.cfg.resolution, aug)?;
        let b = self.dataset.sample(PersonId::B, t_b, self.cfg.resolution, aug)?;
        Ok((a, b))
    }

    /// Runs epochs `self.epoch..cfg.epochs_run`, writing metrics and
    /// checkpoints under `run_dir`.
    pub fn train(&mut self, run_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let metrics_path = run_dir.join("metrics.jsonl");
        let mut metrics = MetricsWriter::open(&metrics_path, self.epoch > 0)?;
        let steps_per_epoch = self
            .train_range(PersonId::A)
            .len()
            .min(self.train_range(PersonId::B).len());
        if steps_per_epoch == 0 {
            return Err(Error::Dataset("no training frames after the split".into()));
        }
        while self.epoch < self.cfg.epochs_run {
            let lr = lr_schedule(
                self.epoch,
                self.cfg.epochs_constant,
                self.cfg.epochs_decay,
                self.cfg.base_lr,
            )?;
            let order_a = self.epoch_order(PersonId::A, self.epoch);
            let order_b = self.epoch_order(PersonId::B, self.epoch);
            let mut s = 0;
            while s + self.cfg.batch_size <= steps_per_epoch {
                let mut batch = Vec::with_capacity(self.cfg.batch_size);
                for k in 0..self.cfg.batch_size {
                    batch.push(self.load_pair(order_a[s + k], order_b[s + k])?);
                }
                let report = self.train_step(&batch, lr, Some(run_dir))?;
                metrics.write(&StepRecord::new(&report, &self.config_hash))?;
                s += self.cfg.batch_size;
            }
            self.epoch += 1;
            let last = self.epoch == self.cfg.epochs_run;
            if last || self.epoch % self.cfg.checkpoint_interval.max(1) == 0 {
                self.save_checkpoint(&run_dir.join("checkpoints").join(format!("epoch_{:04}", self.epoch)))?;
            }
        }
        Ok(())
    }

    fn net_list(&self) -> Vec<String> {
        let mut nets = Vec::new();
        for v in &self.models.views {
            nets.push(v.gen_to_a.params.net_name().to_string());
            nets.push(v.gen_to_b.params.net_name().to_string());
            nets.push(v.disc_a.params.net_name().to_string());
            nets.push(v.disc_b.params.net_name().to_string());
        }
        nets.push(self.models.detector.params.net_name().to_string());
        nets
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        CheckpointManifest {
            config_hash: self.config_hash.clone(),
            epoch: self.epoch,
            step: self.step,
            seed: self.cfg.seed,
            dtype: format!("{:?}", T::DTYPE).to_lowercase(),
            nets: self.net_list(),
        }
        .save(dir)?;
        for (vi, view) in self.models.views.iter().enumerate() {
            save_net(dir, &view.gen_to_a.params, Some(&self.adam_g[vi].0))?;
            save_net(dir, &view.gen_to_b.params, Some(&self.adam_g[vi].1))?;
            save_net(dir, &view.disc_a.params, Some(&self.adam_d[vi].0))?;
            save_net(dir, &view.disc_b.params, Some(&self.adam_d[vi].1))?;
        }
        save_net(dir, &self.models.detector.params, None)?;
        // Image pools (always f32, independent of the training dtype).
        let mut pool_items: Vec<(String, ArrayD<f32>)> = Vec::new();
        for (vi, (pa, pb)) in self.pools.iter().enumerate() {
            for (pi, img) in pa.export().iter().enumerate() {
                pool_items.push((format!("pool.{vi}.a.{pi}"), img.clone().into_dyn()));
            }
            for (pi, img) in pb.export().iter().enumerate() {
                pool_items.push((format!("pool.{vi}.b.{pi}"), img.clone().into_dyn()));
            }
        }
        write_tensors(&dir.join("pools.bin"), &pool_items)
    }

    /// Restores parameters, optimizer state, pools and counters. The
    /// checkpoint must carry the same config hash as this trainer.
    pub fn restore_checkpoint(&mut self, dir: &Path) -> Result<()> {
        let manifest = CheckpointManifest::load(dir)?;
        if manifest.config_hash != self.config_hash {
            return Err(Error::CheckpointMismatch {
                expected: self.config_hash.clone(),
                found: manifest.config_hash,
            });
        }
        for vi in 0..self.models.views.len() {
            {
                let view = &mut self.models.views[vi];
                load_net(dir, &mut view.gen_to_a.params, Some(&mut self.adam_g[vi].0))?;
                load_net(dir, &mut view.gen_to_b.params, Some(&mut self.adam_g[vi].1))?;
                load_net(dir, &mut view.disc_a.params, Some(&mut self.adam_d[vi].0))?;
                load_net(dir, &mut view.disc_b.params, Some(&mut self.adam_d[vi].1))?;
            }
        }
        load_net(dir, &mut self.models.detector.params, None)?;
        let pool_items = read_tensors::<f32>(&dir.join("pools.bin"))?;
        for (vi, pools) in self.pools.iter_mut().enumerate() {
            let collect = |tag: &str| -> Vec<Array3<f32>> {
                let prefix = format!("pool.{vi}.{tag}.");
                let mut found: Vec<(usize, Array3<f32>)> = pool_items
                    .iter()
                    .filter_map(|(name, arr)| {
                        let idx: usize = name.strip_prefix(&prefix)?.parse().ok()?;
                        let a3 = arr
                            .clone()
                            .into_dimensionality::<ndarray::Ix3>()
                            .ok()?;
                        Some((idx, a3))
                    })
                    .collect();
                found.sort_by_key(|(i, _)| *i);
                found.into_iter().map(|(_, a)| a).collect()
            };
            pools.0.restore(collect("a"));
            pools.1.restore(collect("b"));
        }
        self.epoch = manifest.epoch;
        self.step = manifest.step;
        Ok(())
    }

    /// Order-sensitive hash of all discriminator parameters (min-max
    /// discipline checks).
    pub fn disc_param_hash(&self) -> u64 {
        let mut h = 0u64;
        for v in &self.models.views {
            h = h
                .rotate_left(7)
                .wrapping_add(v.disc_a.params.content_hash())
                .rotate_left(7)
                .wrapping_add(v.disc_b.params.content_hash());
        }
        h
    }

    /// Order-sensitive hash of all generator parameters.
    pub fn gen_param_hash(&self) -> u64 {
        let mut h = 0u64;
        for v in &self.models.views {
            h = h
                .rotate_left(7)
                .wrapping_add(v.gen_to_a.params.content_hash())
                .rotate_left(7)
                .wrapping_add(v.gen_to_b.params.content_hash());
        }
        h
    }

    pub fn detector_param_hash(&self) -> u64 {
        self.models.detector.params.content_hash()
    }
}

fn accumulate<T: Scalar>(
    accum: &mut [Option<ArrayD<T>>],
    params: &ParamSet<T>,
    bound: &Bound,
    grads: &crate::autodiff::Grads<T>,
    scale: T,
) {
    for (i, id) in bound.ids.iter().enumerate() {
        let g = grads.get_or_zeros(*id, params.value(i).shape());
        let scaled = g.mapv(|v| v * scale);
        match &mut accum[i] {
            Some(acc) => *acc = &*acc + &scaled,
            slot @ None => *slot = Some(scaled),
        }
    }
}

fn save_net<T: Scalar>(dir: &Path, params: &ParamSet<T>, adam: Option<&AdamState<T>>) -> Result<()> {
    let mut items = params.export_values();
    if let Some(adam) = adam {
        let (m, v, t) = adam.export();
        for ((name, _), (m, v)) in params.export_values().iter().zip(m.into_iter().zip(v)) {
            items.push((format!("adam.m.{name}"), m));
            items.push((format!("adam.v.{name}"), v));
        }
        items.push((
            "adam.t".to_string(),
            ArrayD::from_elem(Vec::<usize>::new(), T::cast_from(t as f64)),
        ));
    }
    write_tensors(&dir.join(format!("{}.bin", params.net_name())), &items)
}

fn load_net<T: Scalar>(
    dir: &Path,
    params: &mut ParamSet<T>,
    adam: Option<&mut AdamState<T>>,
) -> Result<()> {
    let path = dir.join(format!("{}.bin", params.net_name()));
    let items = read_tensors::<T>(&path)?;
    let mut plain = Vec::new();
    let mut adam_m: Vec<(String, ArrayD<T>)> = Vec::new();
    let mut adam_v: Vec<(String, ArrayD<T>)> = Vec::new();
    let mut adam_t = 0u64;
    for (name, tensor) in items {
        if let Some(rest) = name.strip_prefix("adam.m.") {
            adam_m.push((rest.to_string(), tensor));
        } else if let Some(rest) = name.strip_prefix("adam.v.") {
            adam_v.push((rest.to_string(), tensor));
        } else if name == "adam.t" {
            adam_t = tensor.iter().next().map(|v| v.cast_f64() as u64).unwrap_or(0);
        } else {
            plain.push((name, tensor));
        }
    }
    params.load_values(plain)?;
    if let Some(adam) = adam {
        let order = |items: Vec<(String, ArrayD<T>)>| -> Result<Vec<ArrayD<T>>> {
            let mut out = Vec::with_capacity(params.len());
            for name in params.names() {
                let found = items
                    .iter()
                    .find(|(n, _)| n == name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing adam moment for {name}")))?;
                out.push(found.1.clone());
            }
            Ok(out)
        };
        let m = order(adam_m)?;
        let v = order(adam_v)?;
        adam.restore(m, v, adam_t);
    }
    Ok(())
}
