//! Instance normalization and per-channel spatial softmax / max / sum — the
//! normalization pieces of the generators and the keypoint heatmap head.

use ndarray::{ArrayD, Axis};

use super::graph::{BackwardOp, GradSink, Graph, Tid, Values};
use super::scalar::Scalar;

struct InstanceNormBack<T: Scalar> {
    x: Tid,
    y: Tid,
    inv_std: Vec<T>,
}

impl<T: Scalar> BackwardOp<T> for InstanceNormBack<T> {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let y = v.get(self.y);
        let (c, h, w) = (y.shape()[0], y.shape()[1], y.shape()[2]);
        let n = T::cast_from((h * w) as f64);
        let mut dx = ArrayD::<T>::zeros(vec![c, h, w]);
        for ci in 0..c {
            let gy = grad.index_axis(Axis(0), ci);
            let yy = y.index_axis(Axis(0), ci);
            let mean_g = gy.sum() / n;
            let mean_gy = gy
                .iter()
                .zip(yy.iter())
                .map(|(&a, &b)| a * b)
                .fold(T::zero(), |acc, v| acc + v)
                / n;
            let istd = self.inv_std[ci];
            let mut dxc = dx.index_axis_mut(Axis(0), ci);
            for ((d, &g), &yv) in dxc.iter_mut().zip(gy.iter()).zip(yy.iter()) {
                *d = istd * (g - mean_g - yv * mean_gy);
            }
        }
        sink.add(self.x, dx);
    }
}

struct SoftmaxHwBack {
    x: Tid,
    y: Tid,
}

impl<T: Scalar> BackwardOp<T> for SoftmaxHwBack {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let y = v.get(self.y);
        let c = y.shape()[0];
        let mut dx = ArrayD::<T>::zeros(y.shape().to_vec());
        for ci in 0..c {
            let gy = grad.index_axis(Axis(0), ci);
            let s = y.index_axis(Axis(0), ci);
            let dot = gy
                .iter()
                .zip(s.iter())
                .map(|(&a, &b)| a * b)
                .fold(T::zero(), |acc, v| acc + v);
            let mut dxc = dx.index_axis_mut(Axis(0), ci);
            for ((d, &g), &sv) in dxc.iter_mut().zip(gy.iter()).zip(s.iter()) {
                *d = sv * (g - dot);
            }
        }
        sink.add(self.x, dx);
    }
}

struct MaxHwBack {
    x: Tid,
    argmax: Vec<usize>,
    shape: Vec<usize>,
}

impl<T: Scalar> BackwardOp<T> for MaxHwBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let mut dx = ArrayD::<T>::zeros(self.shape.clone());
        let hw = self.shape[1] * self.shape[2];
        let dxs = dx.as_slice_mut().expect("fresh");
        for (ci, &flat) in self.argmax.iter().enumerate() {
            dxs[ci * hw + flat] = grad[[ci]];
        }
        sink.add(self.x, dx);
    }
}

struct SumHwBack {
    x: Tid,
    shape: Vec<usize>,
}

impl<T: Scalar> BackwardOp<T> for SumHwBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let mut dx = ArrayD::<T>::zeros(self.shape.clone());
        for ci in 0..self.shape[0] {
            let g = grad[[ci]];
            dx.index_axis_mut(Axis(0), ci).mapv_inplace(|_| g);
        }
        sink.add(self.x, dx);
    }
}

struct PickHwBack {
    x: Tid,
    cells: Vec<(usize, usize)>,
    shape: Vec<usize>,
}

impl<T: Scalar> BackwardOp<T> for PickHwBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let mut dx = ArrayD::<T>::zeros(self.shape.clone());
        for (ci, &(row, col)) in self.cells.iter().enumerate() {
            dx[[ci, row, col]] = grad[[ci]];
        }
        sink.add(self.x, dx);
    }
}

struct CeCellsBack<T: Scalar> {
    x: Tid,
    cells: Vec<(usize, usize)>,
    softmax: ArrayD<T>,
}

impl<T: Scalar> BackwardOp<T> for CeCellsBack<T> {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let mut dx = self.softmax.clone();
        for (ci, &(row, col)) in self.cells.iter().enumerate() {
            let g = grad[[ci]];
            let mut ch = dx.index_axis_mut(Axis(0), ci);
            ch.mapv_inplace(|s| s * g);
            ch[[row, col]] = ch[[row, col]] - g;
        }
        sink.add(self.x, dx);
    }
}

impl<T: Scalar> Graph<T> {
    /// Per-channel softmax cross-entropy against one target cell:
    /// `logsumexp(x_c) - x_c[cell]`, evaluated stably -> (C,). The backward
    /// rule is the exact `softmax - onehot`, so saturated channels still
    /// produce finite, informative gradients.
    pub fn ce_cells(&mut self, x: Tid, cells: &[(usize, usize)]) -> Tid {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        assert_eq!(cells.len(), c, "one target cell per channel");
        let mut softmax = xv.clone();
        let mut out = Vec::with_capacity(c);
        for (ci, &(row, col)) in cells.iter().enumerate() {
            assert!(row < h && col < w, "target cell out of bounds");
            let mut ch = softmax.index_axis_mut(Axis(0), ci);
            let max = ch.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for v in ch.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            let lse = max + sum.ln();
            out.push(lse - xv[[ci, row, col]]);
            ch.mapv_inplace(|v| v / sum);
        }
        let needs = self.needs_grad(x);
        let value = ArrayD::from_shape_vec(vec![c], out).expect("ce_cells");
        self.push(
            value,
            needs,
            needs.then(|| {
                Box::new(CeCellsBack {
                    x,
                    cells: cells.to_vec(),
                    softmax,
                }) as Box<dyn BackwardOp<T>>
            }),
        )
    }

    /// Gathers one spatial cell per channel of a (C, H, W) tensor -> (C,).
    pub fn pick_hw(&mut self, x: Tid, cells: &[(usize, usize)]) -> Tid {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        assert_eq!(cells.len(), c, "one cell per channel");
        let out: Vec<T> = cells
            .iter()
            .enumerate()
            .map(|(ci, &(row, col))| {
                assert!(row < h && col < w, "cell out of bounds");
                xv[[ci, row, col]]
            })
            .collect();
        let needs = self.needs_grad(x);
        let shape = vec![c, h, w];
        let value = ArrayD::from_shape_vec(vec![c], out).expect("pick_hw");
        self.push(
            value,
            needs,
            needs.then(|| {
                Box::new(PickHwBack {
                    x,
                    cells: cells.to_vec(),
                    shape,
                }) as Box<dyn BackwardOp<T>>
            }),
        )
    }

    /// Per-channel normalization of a (C, H, W) tensor to zero mean and unit
    /// variance over the spatial extent (no learned affine).
    pub fn instance_norm(&mut self, x: Tid, eps: f64) -> Tid {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let n = T::cast_from((h * w) as f64);
        let epsv = T::cast_from(eps);
        let mut y = xv.clone();
        let mut inv_std = Vec::with_capacity(c);
        for ci in 0..c {
            let mut ch = y.index_axis_mut(Axis(0), ci);
            let mean = ch.sum() / n;
            let var = ch
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .fold(T::zero(), |acc, v| acc + v)
                / n;
            let istd = T::one() / (var + epsv).sqrt();
            ch.mapv_inplace(|v| (v - mean) * istd);
            inv_std.push(istd);
        }
        let needs = self.needs_grad(x);
        let id = self.push(y, needs, None);
        if needs {
            self.nodes[id.0].back = Some(Box::new(InstanceNormBack { x, y: id, inv_std }));
        }
        id
    }

    /// Per-channel softmax over the spatial extent of a (C, H, W) tensor.
    /// Each output channel is nonnegative and sums to 1.
    pub fn softmax_hw(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let c = xv.shape()[0];
        let mut y = xv.clone();
        for ci in 0..c {
            let mut ch = y.index_axis_mut(Axis(0), ci);
            let max = ch.iter().cloned().fold(T::neg_infinity(), T::max);
            ch.mapv_inplace(|v| (v - max).exp());
            let sum = ch.sum();
            ch.mapv_inplace(|v| v / sum);
        }
        let needs = self.needs_grad(x);
        let id = self.push(y, needs, None);
        if needs {
            self.nodes[id.0].back = Some(Box::new(SoftmaxHwBack { x, y: id }));
        }
        id
    }

    /// Per-channel spatial maximum of a (C, H, W) tensor -> (C,).
    pub fn max_hw(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for ci in 0..c {
            let ch = xv.index_axis(Axis(0), ci);
            let slice = ch.as_slice().expect("contiguous");
            let (mut best, mut best_i) = (slice[0], 0usize);
            for (i, &v) in slice.iter().enumerate() {
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            out.push(best);
            argmax.push(best_i);
        }
        let needs = self.needs_grad(x);
        let shape = vec![c, h, w];
        let value = ArrayD::from_shape_vec(vec![c], out).expect("max_hw");
        self.push(
            value,
            needs,
            needs.then(|| Box::new(MaxHwBack { x, argmax, shape }) as Box<dyn BackwardOp<T>>),
        )
    }

    /// Per-channel spatial sum of a (C, H, W) tensor -> (C,).
    pub fn sum_hw(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let out: Vec<T> = (0..c).map(|ci| xv.index_axis(Axis(0), ci).sum()).collect();
        let needs = self.needs_grad(x);
        let shape = vec![c, h, w];
        let value = ArrayD::from_shape_vec(vec![c], out).expect("sum_hw");
        self.push(
            value,
            needs,
            needs.then(|| Box::new(SumHwBack { x, shape }) as Box<dyn BackwardOp<T>>),
        )
    }
}
