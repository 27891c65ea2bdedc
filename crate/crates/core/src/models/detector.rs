//! Keypoint heatmap detector: a small conv stack producing one heatmap per
//! joint at 1/4 resolution, read out with a spatial soft-argmax so 2D
//! coordinates stay differentiable w.r.t. the input image.

use ndarray::ArrayD;
use rand::Rng;

use crate::autodiff::{BackwardOp, ConvSpec, GradSink, Graph, Scalar, Tid, Values};
use crate::geometry::NUM_JOINTS;
use crate::models::params::{Bound, ParamSet};

/// Heatmap grid downsampling factor relative to the input crop.
pub const DETECTOR_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    pub base_channels: usize,
    /// Soft-argmax temperature applied to range-normalized logits.
    pub temperature: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            temperature: 100.0,
        }
    }
}

struct Conv {
    w: usize,
    b: usize,
    spec: ConvSpec,
}

pub struct KeypointDetector<T: Scalar> {
    pub params: ParamSet<T>,
    pub cfg: DetectorConfig,
    layers: Vec<Conv>,
    head: Conv,
}

/// Differentiable per-view detection: subpixel coordinates in crop pixels,
/// peak-mass confidences, and the normalized heatmap stack.
pub struct Detection {
    pub xs: Tid,
    pub ys: Tid,
    pub conf: Tid,
    pub heatmaps: Tid,
}

/// Per-channel range normalization times temperature:
/// `y = t * (x - min_c) / (max_c - min_c + e)`. The backward rule
/// differentiates through the (sub)gradients of the channel min and max, so
/// the whole detection chain matches finite differences away from ties.
struct NormalizeHwBack<T: Scalar> {
    x: Tid,
    scale: Vec<T>,
    argmin: Vec<usize>,
    argmax: Vec<usize>,
    temperature: T,
    eps: T,
}

impl<T: Scalar> BackwardOp<T> for NormalizeHwBack<T> {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let x = v.get(self.x);
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let hw = h * w;
        let xs = x.as_slice().expect("contiguous");
        let gs = grad.as_slice().expect("contiguous");
        let mut dx = ArrayD::<T>::zeros(x.shape().to_vec());
        let ds = dx.as_slice_mut().expect("fresh");
        for ci in 0..c {
            let base = ci * hw;
            let s = self.scale[ci];
            let lo = xs[base + self.argmin[ci]];
            // y_i = (x_i - lo) * s with s = t / (hi - lo + e):
            //   dy_i/dx_j = s*(d_ij - d_j,lo) - (x_i - lo) * s^2/t * (d_j,hi - d_j,lo)
            let mut g_sum = T::zero();
            let mut g_dot = T::zero();
            for k in 0..hw {
                let gk = gs[base + k];
                g_sum = g_sum + gk;
                g_dot = g_dot + gk * (xs[base + k] - lo);
                ds[base + k] = gk * s;
            }
            let range_term = g_dot * s * s / self.temperature;
            ds[base + self.argmin[ci]] =
                ds[base + self.argmin[ci]] - g_sum * s + range_term;
            ds[base + self.argmax[ci]] = ds[base + self.argmax[ci]] - range_term;
            let _ = self.eps;
        }
        sink.add(self.x, dx);
    }
}

fn normalize_logits_hw<T: Scalar>(g: &mut Graph<T>, x: Tid, temperature: f64) -> Tid {
    let xv = g.value(x);
    let c = xv.shape()[0];
    let eps = T::cast_from(1e-6);
    let temp = T::cast_from(temperature);
    let mut y = xv.clone();
    let mut scale = Vec::with_capacity(c);
    let mut argmin = Vec::with_capacity(c);
    let mut argmax = Vec::with_capacity(c);
    for mut ch in y.outer_iter_mut() {
        let slice = ch.as_slice().expect("contiguous");
        let (mut lo, mut lo_i) = (slice[0], 0usize);
        let (mut hi, mut hi_i) = (slice[0], 0usize);
        for (i, &v) in slice.iter().enumerate() {
            if v < lo {
                lo = v;
                lo_i = i;
            }
            if v > hi {
                hi = v;
                hi_i = i;
            }
        }
        let s = temp / (hi - lo + eps);
        ch.mapv_inplace(|v| (v - lo) * s);
        scale.push(s);
        argmin.push(lo_i);
        argmax.push(hi_i);
    }
    let needs = g.needs_grad(x);
    g.custom_op(
        y,
        needs,
        needs.then(|| {
            Box::new(NormalizeHwBack {
                x,
                scale,
                argmin,
                argmax,
                temperature: temp,
                eps,
            }) as Box<dyn BackwardOp<T>>
        }),
    )
}

/// Expectation of grid coordinates under per-joint normalized heatmaps.
/// A heatmap with all mass at cell (cx, cy) yields exactly (cx, cy).
pub fn soft_argmax_hw<T: Scalar>(g: &mut Graph<T>, heatmaps: Tid) -> (Tid, Tid) {
    let shape = g.value(heatmaps).shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let grid_x = ArrayD::from_shape_fn(vec![c, h, w], |ix| T::cast_from(ix[2] as f64));
    let grid_y = ArrayD::from_shape_fn(vec![c, h, w], |ix| T::cast_from(ix[1] as f64));
    let wx = g.mul_const(heatmaps, grid_x);
    let wy = g.mul_const(heatmaps, grid_y);
    (g.sum_hw(wx), g.sum_hw(wy))
}

impl<T: Scalar> KeypointDetector<T> {
    pub fn new(net: impl Into<String>, cfg: DetectorConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new(net);
        let c = cfg.base_channels;
        let conv = |params: &mut ParamSet<T>, name: &str, co, ci, k, stride, pad, rng: &mut dyn rand::RngCore| {
            let (w, b) = params.push_conv(name, co, ci, k, k, rng);
            Conv {
                w,
                b,
                spec: ConvSpec { stride, pad },
            }
        };
        let layers = vec![
            conv(&mut params, "c0", c, 3, 3, 2, 1, rng),
            conv(&mut params, "c1", 2 * c, c, 3, 2, 1, rng),
            conv(&mut params, "c2", 2 * c, 2 * c, 3, 1, 1, rng),
            conv(&mut params, "c3", 2 * c, 2 * c, 3, 1, 1, rng),
            conv(&mut params, "c4", 2 * c, 2 * c, 3, 1, 1, rng),
            conv(&mut params, "c5", 2 * c, 2 * c, 3, 1, 1, rng),
        ];
        let head = conv(&mut params, "head", NUM_JOINTS, 2 * c, 1, 1, 0, rng);
        Self {
            params,
            cfg,
            layers,
            head,
        }
    }

    /// Raw per-joint logits at 1/4 input resolution.
    fn logits(&self, g: &mut Graph<T>, bound: &Bound, image: Tid) -> Tid {
        let mut h = image;
        for l in &self.layers {
            h = g.conv2d(h, bound.ids[l.w], bound.ids[l.b], l.spec);
            h = g.relu(h);
        }
        g.conv2d(h, bound.ids[self.head.w], bound.ids[self.head.b], self.head.spec)
    }

    /// Heatmaps, soft-argmax crop-pixel coordinates and peak-mass
    /// confidences for one (3, H, W) image.
    pub fn detect(&self, g: &mut Graph<T>, bound: &Bound, image: Tid) -> Detection {
        self.detect_with_logits(g, bound, image).0
    }

    /// [`Self::detect`] plus the raw per-joint logits (the pretraining loss
    /// applies its cross-entropy to these).
    pub fn detect_with_logits(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        image: Tid,
    ) -> (Detection, Tid) {
        let logits = self.logits(g, bound, image);
        let normalized = normalize_logits_hw(g, logits, self.cfg.temperature);
        let heatmaps = g.softmax_hw(normalized);
        let (gx, gy) = soft_argmax_hw(g, heatmaps);
        // Grid cell centers -> crop pixels.
        let s = T::cast_from(DETECTOR_STRIDE as f64);
        let half = T::cast_from(DETECTOR_STRIDE as f64 * 0.5 - 0.5);
        let sx = g.scale(gx, s);
        let xs = g.add_scalar(sx, half);
        let sy = g.scale(gy, s);
        let ys = g.add_scalar(sy, half);
        let conf = g.max_hw(heatmaps);
        (
            Detection {
                xs,
                ys,
                conf,
                heatmaps,
            },
            logits,
        )
    }
}

/// Converts crop-pixel coordinates to heatmap grid coordinates (the inverse
/// of the mapping inside [`KeypointDetector::detect`]).
pub fn crop_px_to_grid(px: f64) -> f64 {
    (px + 0.5) / DETECTOR_STRIDE as f64 - 0.5
}
