//! Multi-view unpaired person image translation trained under a shared
//! 3D pose constraint.
//!
//! One cycle-consistent translation model is trained per camera viewpoint;
//! the models are coupled through a differentiable multi-view pose estimator
//! (per-view keypoint heatmaps, soft-argmax, confidence-weighted DLT
//! triangulation) whose smooth-MSE distance to the scaled ground-truth pose
//! joins the objective. Setting that coupling weight to zero reduces the
//! system to independent per-view translation baselines.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`geometry`]: cameras, poses, triangulation, pose scaling (pure `f64`).
//! - [`autodiff`]: a small reverse-mode tape over `ndarray`, generic over
//!   `f32`/`f64`, with the conv/norm/soft-argmax/triangulation ops the
//!   models need.
//! - [`losses`]: adversarial, cycle, identity, 3D-pose and total objectives.
//! - [`models`]: generators, patch discriminators, keypoint detector, and
//!   the frozen multi-view pose estimator.
//! - [`data`]: synthetic multi-view dataset generation and CMU-Panoptic
//!   ingestion.
//! - [`trainer`]: joint min-max optimization, LR schedule, image pool,
//!   checkpoints with exact resume.
//! - [`eval`]: pose-preservation and cross-view consistency metrics plus
//!   comparison grids.
//! - [`commands`]: the operations behind the `mvpt` CLI.

pub mod autodiff;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod models;
pub(crate) mod seeding;
pub mod trainer;

pub use error::{Error, Result};
