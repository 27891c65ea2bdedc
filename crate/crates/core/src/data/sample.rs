//! Person-centered crop sampling with horizontal-shift augmentation. Crops
//! are square, `margin` times the ground-truth 2D bounding box, resampled
//! bilinearly to the run resolution; the affine crop-to-frame transform is
//! stored with the sample so triangulation stays exact under augmentation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::data::{resolve_path, AugmentSeed, DatasetManifest, MultiViewSample, PersonId, PoseFile};
use crate::error::{Error, Result};
use crate::geometry::{limb_profile, LimbProfile, Pose2d, Pose3d, Skeleton};
use crate::models::{CropTransform, ImageTensor};

/// Axis-aligned bounding box of the positive-confidence joints.
pub fn person_bbox(pose2d: &Pose2d) -> Option<([f64; 2], [f64; 2])> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for (p, &c) in pose2d.points.iter().zip(&pose2d.confidence) {
        if c > 0.0 {
            any = true;
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    any.then_some((lo, hi))
}

/// Edge-clamped bilinear lookup in frame pixels.
pub fn bilinear_sample(img: &ImageTensor, fx: f64, fy: f64) -> [f32; 3] {
    let (h, w) = (img.height() as isize, img.width() as isize);
    let x0 = fx.floor() as isize;
    let y0 = fy.floor() as isize;
    let ax = (fx - x0 as f64) as f32;
    let ay = (fy - y0 as f64) as f32;
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    let mut out = [0.0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let v00 = img.data()[[c, clamp(y0, h), clamp(x0, w)]];
        let v01 = img.data()[[c, clamp(y0, h), clamp(x0 + 1, w)]];
        let v10 = img.data()[[c, clamp(y0 + 1, h), clamp(x0, w)]];
        let v11 = img.data()[[c, clamp(y0 + 1, h), clamp(x0 + 1, w)]];
        *o = v00 * (1.0 - ax) * (1.0 - ay)
            + v01 * ax * (1.0 - ay)
            + v10 * (1.0 - ax) * ay
            + v11 * ax * ay;
    }
    out
}

/// A manifest plus lazy, thread-safe caches for decoded frames and poses.
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub dir: PathBuf,
    skeleton: Skeleton,
    images: Mutex<HashMap<String, Arc<ImageTensor>>>,
    poses: Mutex<HashMap<String, Arc<PoseFile>>>,
}

impl Dataset {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let dir = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        let skeleton = manifest.skeleton.to_skeleton()?;
        Ok(Self {
            manifest,
            dir,
            skeleton,
            images: Mutex::new(HashMap::new()),
            poses: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_manifest(manifest: DatasetManifest, dir: PathBuf) -> Result<Self> {
        manifest.validate()?;
        let skeleton = manifest.skeleton.to_skeleton()?;
        Ok(Self {
            manifest,
            dir,
            skeleton,
            images: Mutex::new(HashMap::new()),
            poses: Mutex::new(HashMap::new()),
        })
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    fn frame_image(&self, stored: &str) -> Result<Arc<ImageTensor>> {
        if let Some(img) = self.images.lock().expect("image cache").get(stored) {
            return Ok(img.clone());
        }
        let path = resolve_path(&self.dir, stored);
        let decoded = image::open(&path).map_err(|e| Error::image(&path, e))?.to_rgb8();
        let (w, h) = decoded.dimensions();
        let img = Arc::new(ImageTensor::from_rgb8(
            decoded.as_raw(),
            h as usize,
            w as usize,
        )?);
        self.images
            .lock()
            .expect("image cache")
            .insert(stored.to_string(), img.clone());
        Ok(img)
    }

    fn pose_file(&self, stored: &str) -> Result<Arc<PoseFile>> {
        if let Some(p) = self.poses.lock().expect("pose cache").get(stored) {
            return Ok(p.clone());
        }
        let p = Arc::new(PoseFile::load(&resolve_path(&self.dir, stored))?);
        self.poses
            .lock()
            .expect("pose cache")
            .insert(stored.to_string(), p.clone());
        Ok(p)
    }

    pub fn gt_pose(&self, person: PersonId, t: usize) -> Result<Pose3d> {
        let recs = self.manifest.records(person);
        let rec = recs.get(t).ok_or(Error::FrameOutOfRange { t, len: recs.len() })?;
        Ok(self.pose_file(&rec.pose)?.pose3d.clone())
    }

    /// Mean limb profile over the given frames (the training split when
    /// preparing the pose-scaling target).
    pub fn limb_profile_over(
        &self,
        person: PersonId,
        frames: std::ops::Range<usize>,
    ) -> Result<LimbProfile> {
        let mut poses = Vec::with_capacity(frames.len());
        for t in frames {
            poses.push(self.gt_pose(person, t)?);
        }
        limb_profile(&poses, &self.skeleton)
    }

    /// Loads the multi-view sample for `(person, t)`: per-view person crops
    /// at `run_res`, with an optional independent horizontal shift per view.
    /// The shift is bounded so the 2D bounding box always stays inside the
    /// crop, and the crop transform absorbs it exactly; `gt_pose` is never
    /// touched.
    pub fn sample(
        &self,
        person: PersonId,
        t: usize,
        run_res: usize,
        augment: Option<AugmentSeed>,
    ) -> Result<MultiViewSample> {
        let recs = self.manifest.records(person);
        let rec = recs.get(t).ok_or(Error::FrameOutOfRange { t, len: recs.len() })?;
        let pose_file = self.pose_file(&rec.pose)?;
        let margin = self.manifest.crop.margin;

        let mut images = Vec::with_capacity(self.manifest.cameras.len());
        let mut crop_transforms = Vec::with_capacity(self.manifest.cameras.len());
        let mut gt2d = Vec::with_capacity(self.manifest.cameras.len());
        for cam in &self.manifest.cameras {
            let stored = rec
                .images
                .get(&cam.view_id)
                .ok_or_else(|| Error::Dataset(format!("sample missing view {}", cam.view_id)))?;
            let frame = self.frame_image(stored)?;
            let pose2d = pose_file.pose2d.get(&cam.view_id).ok_or_else(|| {
                Error::Dataset(format!("pose file missing view {}", cam.view_id))
            })?;
            let (lo, hi) = person_bbox(pose2d)
                .ok_or_else(|| Error::Dataset(format!("no visible joints in {}", cam.view_id)))?;
            let bbox_w = hi[0] - lo[0];
            let bbox_h = hi[1] - lo[1];
            let side = (bbox_w.max(bbox_h) * margin).max(8.0);
            let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
            // Horizontal-only shift, bounded so the box is never cropped.
            // The draw derives from (seed, person, view, epoch, step), so a
            // view's shift sequence is independent of which other views a
            // trainer touches.
            let shift = match augment {
                Some(ctx) => {
                    let mut rng = crate::seeding::derive_rng(
                        ctx.seed,
                        &["aug", person.key(), &cam.view_id],
                        &[ctx.epoch, ctx.step],
                    );
                    let max_shift = ((side - bbox_w) / 2.0).max(0.0);
                    rng.random_range(-1.0..=1.0) * max_shift
                }
                None => 0.0,
            };
            let top_left = [center[0] - side / 2.0 + shift, center[1] - side / 2.0];
            let scale = side / run_res as f64;
            // Integer crop pixel p samples frame coordinate p*scale + offset.
            let offset = [
                top_left[0] + 0.5 * scale - 0.5,
                top_left[1] + 0.5 * scale - 0.5,
            ];
            let transform = CropTransform { scale, offset };

            let mut crop = ImageTensor::zeros(run_res, run_res);
            for y in 0..run_res {
                for x in 0..run_res {
                    let f = transform.crop_to_frame([x as f64, y as f64]);
                    let px = bilinear_sample(&frame, f[0], f[1]);
                    for c in 0..3 {
                        crop.data_mut()[[c, y, x]] = px[c];
                    }
                }
            }
            let crop_points: Vec<[f64; 2]> = pose2d
                .points
                .iter()
                .map(|p| transform.frame_to_crop(*p))
                .collect();
            gt2d.push(Pose2d::new(crop_points, pose2d.confidence.clone())?);
            images.push(crop);
            crop_transforms.push(transform);
        }
        Ok(MultiViewSample {
            t,
            person,
            images,
            gt_pose: pose_file.pose3d.clone(),
            crop_transforms,
            gt_pose2d_crop: gt2d,
        })
    }
}
