//! Learnable components: per-view generator pairs and patch discriminators,
//! plus the frozen keypoint detector behind the multi-view pose estimator.

mod detector;
mod discriminator;
mod estimator;
mod generator;
mod params;

pub use detector::{
    crop_px_to_grid, soft_argmax_hw, Detection, DetectorConfig, KeypointDetector, DETECTOR_STRIDE,
};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use estimator::{estimate_pose, pose_to_target, CropTransform, EstimatedPose};
pub use generator::{Generator, GeneratorConfig};
pub use params::{Bound, ParamSet};

use ndarray::Array3;

use crate::autodiff::{Graph, Scalar, Tid};
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::seeding;

/// A (3, H, W) image with values in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f32>,
}

impl ImageTensor {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if data.shape()[0] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "image must be (3, H, W), got {:?}",
                data.shape()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image tensor".into()));
        }
        let mut data = data;
        data.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        Ok(Self { data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            data: Array3::zeros((3, height, width)),
        }
    }

    /// 8-bit RGB (H, W, 3) -> [-1, 1] (3, H, W).
    pub fn from_rgb8(pixels: &[u8], height: usize, width: usize) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} rgb bytes, got {}",
                height * width * 3,
                pixels.len()
            )));
        }
        let mut data = Array3::zeros((3, height, width));
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data[[c, y, x]] = pixels[(y * width + x) * 3 + c] as f32 / 127.5 - 1.0;
                }
            }
        }
        Ok(Self { data })
    }

    /// [-1, 1] (3, H, W) -> 8-bit RGB rows (H, W, 3).
    pub fn to_rgb8(&self) -> Vec<u8> {
        let (h, w) = (self.height(), self.width());
        let mut out = vec![0u8; h * w * 3];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = ((self.data[[c, y, x]] + 1.0) * 127.5).round().clamp(0.0, 255.0);
                    out[(y * w + x) * 3 + c] = v as u8;
                }
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f32> {
        &mut self.data
    }

    /// Enters the image on a tape as a constant.
    pub fn to_graph<T: Scalar>(&self, g: &mut Graph<T>) -> Tid {
        g.constant(self.data.mapv(|v| T::cast_from(v as f64)).into_dyn())
    }

    /// Reads a (3, H, W) tape tensor back into an image, clamping into
    /// range.
    pub fn from_graph<T: Scalar>(g: &Graph<T>, id: Tid) -> Result<Self> {
        let v = g.value(id);
        if v.ndim() != 3 || v.shape()[0] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "graph tensor has shape {:?}, expected (3, H, W)",
                v.shape()
            )));
        }
        let arr = Array3::from_shape_vec(
            (3, v.shape()[1], v.shape()[2]),
            v.iter().map(|x| x.cast_f64() as f32).collect(),
        )
        .expect("contiguous");
        Self::new(arr)
    }
}

/// Model hyperparameters shared by training and evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub resolution: usize,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub detector: DetectorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            detector: DetectorConfig::default(),
        }
    }
}

/// The four per-view networks: `gen_to_b` maps person-A images to person-B
/// images for this viewpoint (and vice versa), each with the discriminator
/// judging its output domain.
pub struct ViewModels<T: Scalar> {
    pub view_id: String,
    pub gen_to_a: Generator<T>,
    pub gen_to_b: Generator<T>,
    pub disc_a: Discriminator<T>,
    pub disc_b: Discriminator<T>,
}

/// All learnable state of a run: one [`ViewModels`] per camera plus the
/// shared frozen detector. Network initialization derives a dedicated RNG
/// stream per network name, so a given view's weights are identical whether
/// it is trained jointly or alone.
pub struct TranslationModelSet<T: Scalar> {
    pub views: Vec<ViewModels<T>>,
    pub detector: KeypointDetector<T>,
    pub cameras: Vec<CameraView>,
    pub cfg: ModelConfig,
}

impl<T: Scalar> TranslationModelSet<T> {
    pub fn new(cfg: ModelConfig, cameras: Vec<CameraView>, seed: u64) -> Result<Self> {
        // A single view is allowed for the independent per-view baseline;
        // everything multi-view (the estimator, the 3D loss) checks its own
        // >= 2-view precondition.
        if cameras.is_empty() {
            return Err(Error::Config("need at least 1 view".into()));
        }
        if cfg.resolution % 4 != 0 {
            return Err(Error::Config(format!(
                "resolution {} must be divisible by 4",
                cfg.resolution
            )));
        }
        let views = cameras
            .iter()
            .map(|cam| {
                let v = &cam.view_id;
                let mk = |name: String| seeding::derive_rng(seed, &["init", &name], &[]);
                ViewModels {
                    view_id: v.clone(),
                    gen_to_a: Generator::new(
                        format!("g_to_a_{v}"),
                        cfg.generator,
                        &mut mk(format!("g_to_a_{v}")),
                    ),
                    gen_to_b: Generator::new(
                        format!("g_to_b_{v}"),
                        cfg.generator,
                        &mut mk(format!("g_to_b_{v}")),
                    ),
                    disc_a: Discriminator::new(
                        format!("d_a_{v}"),
                        cfg.discriminator,
                        &mut mk(format!("d_a_{v}")),
                    ),
                    disc_b: Discriminator::new(
                        format!("d_b_{v}"),
                        cfg.discriminator,
                        &mut mk(format!("d_b_{v}")),
                    ),
                }
            })
            .collect();
        let detector = KeypointDetector::new(
            "detector",
            cfg.detector,
            &mut seeding::derive_rng(seed, &["init", "detector"], &[]),
        );
        Ok(Self {
            views,
            detector,
            cameras,
            cfg,
        })
    }

    pub fn view_index(&self, view_id: &str) -> Option<usize> {
        self.views.iter().position(|v| v.view_id == view_id)
    }

    /// Non-graph single-image inference through one generator, with the
    /// resolution contract checked.
    pub fn translate(&self, gen: &Generator<T>, image: &ImageTensor) -> Result<ImageTensor> {
        if image.height() != self.cfg.resolution || image.width() != self.cfg.resolution {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} does not match run resolution {}",
                image.height(),
                image.width(),
                self.cfg.resolution
            )));
        }
        let mut g: Graph<T> = Graph::new();
        let x = image.to_graph(&mut g);
        let bound = gen.params.bind(&mut g, false);
        let y = gen.forward(&mut g, &bound, x);
        ImageTensor::from_graph(&g, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_and_clamp() {
        let mut a = Array3::<f32>::zeros((3, 2, 2));
        a[[0, 0, 0]] = 2.5; // out of range -> clamped
        a[[1, 1, 1]] = -0.5;
        let img = ImageTensor::new(a).unwrap();
        assert_eq!(img.data()[[0, 0, 0]], 1.0);
        let bytes = img.to_rgb8();
        let back = ImageTensor::from_rgb8(&bytes, 2, 2).unwrap();
        assert!((back.data()[[1, 1, 1]] - -0.5).abs() < 0.01);
    }

    #[test]
    fn model_set_requires_a_view() {
        assert!(TranslationModelSet::<f32>::new(ModelConfig::default(), vec![], 1).is_err());
        let cam = crate::data::test_support::ring_cameras(1, 64);
        assert!(TranslationModelSet::<f32>::new(ModelConfig::default(), cam, 1).is_ok());
    }

    #[test]
    fn same_seed_same_weights_whatever_the_view_subset() {
        let cams = crate::data::test_support::ring_cameras(2, 64);
        let full = TranslationModelSet::<f32>::new(ModelConfig::default(), cams.clone(), 42).unwrap();
        let only_v1 =
            TranslationModelSet::<f32>::new(ModelConfig::default(), vec![cams[1].clone(), cams[0].clone()], 42)
                .unwrap();
        // View v1's networks are identical whether initialized first or second.
        let a = &full.views[1];
        let b = &only_v1.views[0];
        assert_eq!(a.gen_to_b.params.content_hash(), b.gen_to_b.params.content_hash());
        assert_eq!(a.disc_a.params.content_hash(), b.disc_a.params.content_hash());
        assert_eq!(
            full.detector.params.content_hash(),
            only_v1.detector.params.content_hash()
        );
    }
}
