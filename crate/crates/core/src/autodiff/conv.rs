//! 2D convolution (zero padding, arbitrary stride), nearest-neighbor
//! upsampling, and the im2col/col2im kernels they share. Layout is (C, H, W)
//! for activations and (Co, Ci, kh, kw) for filters; batching is handled one
//! sample at a time by the trainer.

use ndarray::{Array2, ArrayD, ArrayViewD};

use super::gemm::{gemm_into, gemm_reduce};

use super::graph::{BackwardOp, GradSink, Graph, Tid, Values};
use super::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
}

fn out_extent(extent: usize, k: usize, spec: ConvSpec) -> usize {
    assert!(
        extent + 2 * spec.pad >= k,
        "conv input {extent}+2*{} smaller than kernel {k}",
        spec.pad
    );
    (extent + 2 * spec.pad - k) / spec.stride + 1
}

fn im2col<T: Scalar>(x: &ArrayViewD<'_, T>, kh: usize, kw: usize, spec: ConvSpec) -> Array2<T> {
    let (ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ho, wo) = (out_extent(h, kh, spec), out_extent(w, kw, spec));
    let mut cols = Array2::<T>::zeros((ci * kh * kw, ho * wo));
    let xs = x.as_slice().expect("conv input must be contiguous");
    let cs = cols.as_slice_mut().expect("freshly allocated");
    let s = spec.stride;
    for c in 0..ci {
        for ky in 0..kh {
            let oy_off = ky as isize - spec.pad as isize;
            for kx in 0..kw {
                let ox_off = kx as isize - spec.pad as isize;
                let Some((ox_lo, ox_hi)) = valid_span(w, wo, s, ox_off) else {
                    continue;
                };
                let row = (c * kh + ky) * kw + kx;
                let row_base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * s) as isize + oy_off;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let x_base = (c * h + iy as usize) * w;
                    let out_base = row_base + oy * wo;
                    let ix0 = (ox_lo * s) as isize + ox_off;
                    if s == 1 {
                        let n = ox_hi - ox_lo + 1;
                        cs[out_base + ox_lo..out_base + ox_lo + n]
                            .copy_from_slice(&xs[x_base + ix0 as usize..x_base + ix0 as usize + n]);
                    } else {
                        let mut ix = ix0 as usize;
                        for ox in ox_lo..=ox_hi {
                            cs[out_base + ox] = xs[x_base + ix];
                            ix += s;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Inclusive output range whose strided input index stays inside
/// `0..extent`.
fn valid_span(extent: usize, out_extent: usize, stride: usize, offset: isize) -> Option<(usize, usize)> {
    // smallest o with o*stride + offset >= 0
    let lo = if offset >= 0 {
        0usize
    } else {
        ((-offset) as usize).div_ceil(stride)
    };
    // largest o with o*stride + offset <= extent - 1
    let max_i = extent as isize - 1 - offset;
    if max_i < 0 {
        return None;
    }
    let hi = (max_i as usize / stride).min(out_extent - 1);
    (lo <= hi).then_some((lo, hi))
}

fn col2im<T: Scalar>(
    cols: &Array2<T>,
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    spec: ConvSpec,
) -> ArrayD<T> {
    let (ho, wo) = (out_extent(h, kh, spec), out_extent(w, kw, spec));
    let mut x = ArrayD::<T>::zeros(vec![ci, h, w]);
    let xs = x.as_slice_mut().expect("freshly allocated");
    let cs = cols.as_slice().expect("contiguous");
    let s = spec.stride;
    for c in 0..ci {
        for ky in 0..kh {
            let oy_off = ky as isize - spec.pad as isize;
            for kx in 0..kw {
                let ox_off = kx as isize - spec.pad as isize;
                let Some((ox_lo, ox_hi)) = valid_span(w, wo, s, ox_off) else {
                    continue;
                };
                let row = (c * kh + ky) * kw + kx;
                let row_base = row * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * s) as isize + oy_off;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let x_base = (c * h + iy as usize) * w;
                    let out_base = row_base + oy * wo;
                    let ix0 = ((ox_lo * s) as isize + ox_off) as usize;
                    if s == 1 {
                        let n = ox_hi - ox_lo + 1;
                        let (dst, src) = (
                            &mut xs[x_base + ix0..x_base + ix0 + n],
                            &cs[out_base + ox_lo..out_base + ox_lo + n],
                        );
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d = *d + v;
                        }
                    } else {
                        let mut ix = ix0;
                        for ox in ox_lo..=ox_hi {
                            xs[x_base + ix] = xs[x_base + ix] + cs[out_base + ox];
                            ix += s;
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_forward<T: Scalar>(
    x: &ArrayViewD<'_, T>,
    w: &ArrayViewD<'_, T>,
    b: &ArrayViewD<'_, T>,
    spec: ConvSpec,
) -> ArrayD<T> {
    let (co, ci, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(x.shape()[0], ci, "conv: input channels mismatch");
    let (h, wd) = (x.shape()[1], x.shape()[2]);
    let (ho, wo) = (out_extent(h, kh, spec), out_extent(wd, kw, spec));
    let cols = im2col(x, kh, kw, spec);
    let wmat = w.to_shape((co, ci * kh * kw)).expect("filter reshape");
    let mut y = Array2::<T>::zeros((co, ho * wo));
    gemm_into(wmat.view(), cols.view(), &mut y);
    let bs = b.as_slice().expect("bias contiguous");
    for (c, mut row) in y.rows_mut().into_iter().enumerate() {
        let bc = bs[c];
        row.mapv_inplace(|v| v + bc);
    }
    y.into_shape_with_order(vec![co, ho, wo])
        .expect("conv output reshape")
        .into_dyn()
}

struct ConvBack {
    x: Tid,
    w: Tid,
    b: Tid,
    spec: ConvSpec,
}

impl<T: Scalar> BackwardOp<T> for ConvBack {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let x = v.get(self.x);
        let w = v.get(self.w);
        let (co, ci, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let (h, wd) = (x.shape()[1], x.shape()[2]);
        let (ho, wo) = (grad.shape()[1], grad.shape()[2]);
        let gmat = grad
            .view()
            .into_shape_with_order((co, ho * wo))
            .expect("grad reshape");

        if sink.needs(self.b) {
            let db: Vec<T> = gmat.rows().into_iter().map(|r| r.sum()).collect();
            sink.add(self.b, ArrayD::from_shape_vec(vec![co], db).expect("db"));
        }
        if sink.needs(self.w) {
            // dW = dY . cols^T, recomputing cols from the stored input.
            let cols = im2col(&x.view(), kh, kw, self.spec);
            let dw = gemm_reduce(gmat.view(), cols.t());
            sink.add(
                self.w,
                dw.into_shape_with_order(vec![co, ci, kh, kw])
                    .expect("dw reshape")
                    .into_dyn(),
            );
        }
        if sink.needs(self.x) {
            let wmat = w.to_shape((co, ci * kh * kw)).expect("filter reshape");
            let mut dcols = Array2::<T>::zeros((ci * kh * kw, ho * wo));
            gemm_into(wmat.t(), gmat.view(), &mut dcols);
            sink.add(self.x, col2im(&dcols, ci, h, wd, kh, kw, self.spec));
        }
    }
}

struct Upsample2Back {
    x: Tid,
}

impl<T: Scalar> BackwardOp<T> for Upsample2Back {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let x = v.get(self.x);
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut dx = ArrayD::<T>::zeros(vec![c, h, w]);
        let gs = grad.as_slice().expect("contiguous grad");
        let ds = dx.as_slice_mut().expect("fresh");
        let (h2, w2) = (2 * h, 2 * w);
        for ci in 0..c {
            for i in 0..h {
                let row0 = (ci * h2 + 2 * i) * w2;
                let row1 = row0 + w2;
                let out = (ci * h + i) * w;
                for j in 0..w {
                    ds[out + j] = gs[row0 + 2 * j]
                        + gs[row0 + 2 * j + 1]
                        + gs[row1 + 2 * j]
                        + gs[row1 + 2 * j + 1];
                }
            }
        }
        sink.add(self.x, dx);
    }
}

impl<T: Scalar> Graph<T> {
    /// 2D convolution with zero padding. `x`: (Ci, H, W); `w`:
    /// (Co, Ci, kh, kw); `b`: (Co).
    pub fn conv2d(&mut self, x: Tid, w: Tid, b: Tid, spec: ConvSpec) -> Tid {
        let value = conv_forward(
            &self.value(x).view(),
            &self.value(w).view(),
            &self.value(b).view(),
            spec,
        );
        let needs = self.any_needs_grad(&[x, w, b]);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(ConvBack { x, w, b, spec }) as Box<dyn BackwardOp<T>>),
        )
    }

    /// Nearest-neighbor 2x upsampling of a (C, H, W) tensor.
    pub fn upsample2(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut y = ArrayD::<T>::zeros(vec![c, 2 * h, 2 * w]);
        {
            let xs = xv.as_slice().expect("contiguous input");
            let ys = y.as_slice_mut().expect("fresh");
            let (h2, w2) = (2 * h, 2 * w);
            for ci in 0..c {
                for i in 0..h {
                    let src = (ci * h + i) * w;
                    let row0 = (ci * h2 + 2 * i) * w2;
                    let row1 = row0 + w2;
                    for j in 0..w {
                        let v = xs[src + j];
                        ys[row0 + 2 * j] = v;
                        ys[row0 + 2 * j + 1] = v;
                        ys[row1 + 2 * j] = v;
                        ys[row1 + 2 * j + 1] = v;
                    }
                }
            }
        }
        let needs = self.needs_grad(x);
        self.push(
            y,
            needs,
            needs.then(|| Box::new(Upsample2Back { x }) as Box<dyn BackwardOp<T>>),
        )
    }
}
