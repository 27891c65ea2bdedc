//! Named parameter tensors for one network, bound into a graph per forward
//! pass either as trainable leaves or as frozen constants.

use ndarray::ArrayD;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Scalar, Tid};
use crate::error::{Error, Result};

pub struct ParamSet<T: Scalar> {
    net: String,
    names: Vec<String>,
    values: Vec<ArrayD<T>>,
}

/// Graph ids of one network's parameters for a single forward pass.
pub struct Bound {
    pub ids: Vec<Tid>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new(net: impl Into<String>) -> Self {
        Self {
            net: net.into(),
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn net_name(&self) -> &str {
        &self.net
    }

    pub fn push(&mut self, name: impl Into<String>, value: ArrayD<T>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    /// Filter weights drawn from N(0, 0.02), bias zeros.
    pub fn push_conv(
        &mut self,
        name: &str,
        co: usize,
        ci: usize,
        kh: usize,
        kw: usize,
        rng: &mut dyn rand::RngCore,
    ) -> (usize, usize) {
        let normal = Normal::new(0.0f64, 0.02).expect("valid stddev");
        let w = ArrayD::from_shape_simple_fn(vec![co, ci, kh, kw], || {
            T::cast_from(normal.sample(rng))
        });
        let b = ArrayD::zeros(vec![co]);
        (
            self.push(format!("{name}.weight"), w),
            self.push(format!("{name}.bias"), b),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, idx: usize) -> &ArrayD<T> {
        &self.values[idx]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut ArrayD<T> {
        &mut self.values[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Registers every tensor on the tape; trainable parameters become
    /// leaves, frozen ones constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let ids = self
            .values
            .iter()
            .map(|v| {
                if trainable {
                    g.leaf(v.clone())
                } else {
                    g.constant(v.clone())
                }
            })
            .collect();
        Bound { ids }
    }

    /// Order-sensitive FNV-1a hash over the exact parameter bits, used by
    /// the min-max discipline and freezing checks.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        };
        for v in &self.values {
            let mut buf = Vec::with_capacity(v.len() * T::BYTES);
            for &x in v.iter() {
                x.write_le(&mut buf);
            }
            buf.iter().for_each(|&b| eat(b));
        }
        h
    }

    /// Replaces values from a name-keyed map (checkpoint restore).
    pub fn load_values(&mut self, mut tensors: Vec<(String, ArrayD<T>)>) -> Result<()> {
        for (name, value) in tensors.drain(..) {
            let idx = self
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name} in {}", self.net)))?;
            if self.values[idx].shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} != expected {:?}",
                    value.shape(),
                    self.values[idx].shape()
                )));
            }
            self.values[idx] = value;
        }
        Ok(())
    }

    pub fn export_values(&self) -> Vec<(String, ArrayD<T>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.values.iter().cloned())
            .collect()
    }
}
