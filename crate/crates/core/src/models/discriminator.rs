//! Patch discriminator: a strided conv stack ending in a spatial score map,
//! so real/fake decisions are made per receptive-field patch rather than per
//! image.

use rand::Rng;

use crate::autodiff::{ConvSpec, Graph, Scalar, Tid};
use crate::models::params::{Bound, ParamSet};

const IN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { base_channels: 16 }
    }
}

struct Conv {
    w: usize,
    b: usize,
    spec: ConvSpec,
}

pub struct Discriminator<T: Scalar> {
    pub params: ParamSet<T>,
    layers: Vec<Conv>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(net: impl Into<String>, cfg: DiscriminatorConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new(net);
        let c = cfg.base_channels;
        let mut layers = Vec::new();
        let mut push = |params: &mut ParamSet<T>, name: &str, co, ci, stride, rng: &mut dyn rand::RngCore| {
            let (w, b) = params.push_conv(name, co, ci, 4, 4, rng);
            layers.push(Conv {
                w,
                b,
                spec: ConvSpec { stride, pad: 1 },
            });
        };
        push(&mut params, "c0", c, 3, 2, rng);
        push(&mut params, "c1", 2 * c, c, 2, rng);
        push(&mut params, "c2", 4 * c, 2 * c, 1, rng);
        push(&mut params, "score", 1, 4 * c, 1, rng);
        Self { params, layers }
    }

    /// Raw (1, h', w') patch score map; interpretation (logit vs direct
    /// least-squares score) is the loss function's business.
    pub fn forward(&self, g: &mut Graph<T>, bound: &Bound, x: Tid) -> Tid {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = g.conv2d(h, bound.ids[l.w], bound.ids[l.b], l.spec);
            if i == last {
                break;
            }
            if i > 0 {
                h = g.instance_norm(h, IN_EPS);
            }
            h = g.leaky_relu_02(h);
        }
        h
    }
}
