//! A compact eager reverse-mode autodiff tape over `ndarray`, generic over
//! `f32`/`f64`. It carries exactly the ops the translation models need:
//! elementwise math, zero-padded strided convolution, nearest upsampling,
//! instance norm, spatial softmax/max/sum, differentiable DLT triangulation
//! and the smooth-MSE pose distance.
//!
//! Training runs in `f32`; the gradient suites instantiate identical graphs
//! in `f64` and compare every backward rule against central finite
//! differences (see [`fdcheck`]).

mod conv;
mod gemm;
pub mod fdcheck;
mod graph;
mod norm;
mod ops;
mod pose_ops;
mod scalar;

pub use conv::ConvSpec;
pub use graph::{BackwardOp, GradSink, Grads, Graph, Tid, Values};
pub use pose_ops::ViewObservation;
pub use scalar::{DType, Scalar};
