//! Image-to-image generator: convolutional encoder, residual transformation
//! blocks, nearest-upsample decoder, tanh output. Width and depth are
//! configurable so desk-scale runs stay cheap.

use rand::Rng;

use crate::autodiff::{ConvSpec, Graph, Scalar, Tid};
use crate::models::params::{Bound, ParamSet};

const IN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub res_blocks: usize,
    /// Kernel size of the first and last convolution (odd).
    pub head_kernel: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 16,
            res_blocks: 2,
            head_kernel: 7,
        }
    }
}

struct Conv {
    w: usize,
    b: usize,
    spec: ConvSpec,
}

pub struct Generator<T: Scalar> {
    pub params: ParamSet<T>,
    head: Conv,
    down: Vec<Conv>,
    res: Vec<(Conv, Conv)>,
    up: Vec<Conv>,
    tail: Conv,
}

impl<T: Scalar> Generator<T> {
    pub fn new(net: impl Into<String>, cfg: GeneratorConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new(net);
        let c = cfg.base_channels;
        let conv = |p: &mut ParamSet<T>, name: &str, co, ci, k, spec, rng: &mut dyn rand::RngCore| {
            let (w, b) = p.push_conv(name, co, ci, k, k, rng);
            Conv { w, b, spec }
        };
        let s1 = |pad| ConvSpec { stride: 1, pad };
        let s2 = ConvSpec { stride: 2, pad: 1 };

        let hk = cfg.head_kernel.max(1) | 1; // force odd
        let head = conv(&mut params, "head", c, 3, hk, s1(hk / 2), rng);
        let down = vec![
            conv(&mut params, "down0", 2 * c, c, 3, s2, rng),
            conv(&mut params, "down1", 4 * c, 2 * c, 3, s2, rng),
        ];
        let res = (0..cfg.res_blocks)
            .map(|i| {
                (
                    conv(&mut params, &format!("res{i}a"), 4 * c, 4 * c, 3, s1(1), rng),
                    conv(&mut params, &format!("res{i}b"), 4 * c, 4 * c, 3, s1(1), rng),
                )
            })
            .collect();
        let up = vec![
            conv(&mut params, "up0", 2 * c, 4 * c, 3, s1(1), rng),
            conv(&mut params, "up1", c, 2 * c, 3, s1(1), rng),
        ];
        let tail = conv(&mut params, "tail", 3, c, hk, s1(hk / 2), rng);
        Self {
            params,
            head,
            down,
            res,
            up,
            tail,
        }
    }

    /// Translates a (3, H, W) image in [-1, 1] to a same-shape image in
    /// [-1, 1]. H and W must be divisible by 4 (two stride-2 stages).
    pub fn forward(&self, g: &mut Graph<T>, bound: &Bound, x: Tid) -> Tid {
        let shape = g.value(x).shape().to_vec();
        assert_eq!(shape[0], 3, "generator expects (3, H, W)");
        assert!(
            shape[1] % 4 == 0 && shape[2] % 4 == 0,
            "generator resolution {}x{} not divisible by 4",
            shape[1],
            shape[2]
        );
        let cir = |g: &mut Graph<T>, conv: &Conv, x: Tid| {
            let y = g.conv2d(x, bound.ids[conv.w], bound.ids[conv.b], conv.spec);
            let y = g.instance_norm(y, IN_EPS);
            g.relu(y)
        };
        let mut h = cir(g, &self.head, x);
        for d in &self.down {
            h = cir(g, d, h);
        }
        for (a, b) in &self.res {
            let y = cir(g, a, h);
            let y = g.conv2d(y, bound.ids[b.w], bound.ids[b.b], b.spec);
            let y = g.instance_norm(y, IN_EPS);
            h = g.add(h, y);
        }
        for u in &self.up {
            let y = g.upsample2(h);
            h = cir(g, u, y);
        }
        let y = g.conv2d(h, bound.ids[self.tail.w], bound.ids[self.tail.b], self.tail.spec);
        g.tanh(y)
    }
}
