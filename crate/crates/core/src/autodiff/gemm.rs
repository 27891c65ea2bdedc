//! Deterministic parallel GEMM helpers for the convolution kernels. Column
//! splits write disjoint output blocks (bitwise identical to the serial
//! result); the reduction split sums its partials in a fixed order.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};

use super::scalar::Scalar;

/// Problems below this many multiply-adds stay single-threaded.
const PAR_THRESHOLD: usize = 4_000_000;

/// `out = a . b`, parallelized over column blocks of `b`.
pub(crate) fn gemm_into<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>, out: &mut Array2<T>) {
    let (m, k) = a.dim();
    let (_, n) = b.dim();
    debug_assert_eq!(out.dim(), (m, n));
    let work = m * k * n;
    let threads = rayon::current_num_threads();
    if work < PAR_THRESHOLD || threads < 2 || n < 2 * threads {
        general_mat_mul(T::one(), &a, &b, T::zero(), out);
        return;
    }
    let chunk = n.div_ceil(threads);
    let b_chunks: Vec<ArrayView2<'_, T>> = b.axis_chunks_iter(Axis(1), chunk).collect();
    let out_chunks: Vec<_> = out.axis_chunks_iter_mut(Axis(1), chunk).collect();
    rayon::scope(|s| {
        for (bc, mut oc) in b_chunks.into_iter().zip(out_chunks) {
            s.spawn(move |_| {
                general_mat_mul(T::one(), &a, &bc, T::zero(), &mut oc);
            });
        }
    });
}

/// `a . b` where the shared dimension is large (the dW reduction): splits
/// the shared dimension across threads and sums the partial products in
/// chunk order, so the result does not depend on scheduling.
pub(crate) fn gemm_reduce<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<T> {
    let (m, n) = a.dim();
    let (_, k) = b.dim();
    let work = m * n * k;
    let threads = rayon::current_num_threads();
    if work < PAR_THRESHOLD || threads < 2 || n < 2 * threads {
        let mut out = Array2::<T>::zeros((m, k));
        general_mat_mul(T::one(), &a, &b, T::zero(), &mut out);
        return out;
    }
    let chunk = n.div_ceil(threads);
    let a_chunks: Vec<ArrayView2<'_, T>> = a.axis_chunks_iter(Axis(1), chunk).collect();
    let b_chunks: Vec<ArrayView2<'_, T>> = b.axis_chunks_iter(Axis(0), chunk).collect();
    let mut partials: Vec<Option<Array2<T>>> = (0..a_chunks.len()).map(|_| None).collect();
    rayon::scope(|s| {
        for ((ac, bc), slot) in a_chunks.into_iter().zip(b_chunks).zip(partials.iter_mut()) {
            s.spawn(move |_| {
                let mut p = Array2::<T>::zeros((m, k));
                general_mat_mul(T::one(), &ac, &bc, T::zero(), &mut p);
                *slot = Some(p);
            });
        }
    });
    let mut iter = partials.into_iter().map(|p| p.expect("partial computed"));
    let mut out = iter.next().expect("at least one partial");
    for p in iter {
        ndarray::Zip::from(&mut out).and(&p).for_each(|o, &v| *o = *o + v);
    }
    out
}
