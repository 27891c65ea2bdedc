//! The operations behind the CLI subcommands, kept in the library so tests
//! and foreign-language callers go through the same code paths.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfigFile;
use crate::data::{ingest_panoptic, synth_scene, Dataset, PanopticPersonSpec, PersonId};
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, render_comparison, EvalReport};
use crate::trainer::{pretrain_detector, read_tensors, write_tensors, Trainer};

/// Run-level metadata stored next to checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub baseline: bool,
    pub detector_heldout_px: Option<f64>,
}

impl RunMeta {
    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join("run_meta.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("run_meta.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }
}

/// Order-insensitive content hash of a generated dataset directory
/// (manifest plus every stored file), printed by `synth` so reproducibility
/// is checkable at a glance.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut files: Vec<PathBuf> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let entry = entry.map_err(|e| Error::io(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    let mut hasher = Sha256::new();
    for f in &files {
        hasher.update(f.strip_prefix(dir).unwrap_or(f).to_string_lossy().as_bytes());
        hasher.update(std::fs::read(f).map_err(|e| Error::io(f, e))?);
    }
    let digest = hasher.finalize();
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// `synth`: generate the synthetic dataset and print its content hash.
pub fn cmd_synth(config: &RunConfigFile, seed: Option<u64>, out: &Path) -> Result<String> {
    let seed = seed.unwrap_or(config.train.seed);
    let synth_cfg = config.data.synth.to_synth_config();
    synth_scene(&synth_cfg, seed, out)?;
    let hash = dataset_hash(out)?;
    println!(
        "dataset written to {} ({} views, {} frames/person, hash {hash})",
        out.display(),
        synth_cfg.views,
        synth_cfg.frames
    );
    Ok(hash)
}

/// `ingest`: parse a CMU-Panoptic sequence into a manifest under `out`.
pub fn cmd_ingest(config: &RunConfigFile, out: &Path) -> Result<()> {
    let section = config.data.panoptic.as_ref().ok_or_else(|| {
        Error::Config("config has no [data.panoptic] section".into())
    })?;
    let specs = [
        PanopticPersonSpec {
            person: PersonId::A,
            body_id: section.body_a,
        },
        PanopticPersonSpec {
            person: PersonId::B,
            body_id: section.body_b,
        },
    ];
    let (manifest, report) = ingest_panoptic(&section.root, &section.cameras, &specs)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    manifest.save(&out.join("manifest.json"))?;
    let report_path = out.join("ingest_report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).map_err(|e| Error::json(&report_path, e))?,
    )
    .map_err(|e| Error::io(&report_path, e))?;
    println!(
        "ingested {} frames ({} dropped missing view, {} missing pose), reprojection in-bounds {:.2}%",
        report.frames_used,
        report.dropped_missing_view,
        report.dropped_missing_pose,
        100.0 * report.reprojection_in_bounds
    );
    Ok(())
}

fn open_dataset(config: &RunConfigFile) -> Result<Arc<Dataset>> {
    let manifest_path = config.manifest_path()?;
    Ok(Arc::new(Dataset::open(&manifest_path)?))
}

/// Builds a trainer for the given config (shared by train/eval/compare so
/// checkpoint shapes always line up).
pub fn build_trainer(config: &RunConfigFile, baseline: bool) -> Result<Trainer<f32>> {
    let mut weights = config.loss;
    if baseline && weights.lambda4 != 0.0 {
        eprintln!(
            "warning: --baseline overrides loss.lambda4 = {} to 0",
            weights.lambda4
        );
        weights.lambda4 = 0.0;
    }
    let mut hashed = config.clone();
    hashed.loss = weights;
    let dataset = open_dataset(config)?;
    Trainer::new(
        config.train.clone(),
        weights,
        config.model.to_model_config(config.train.resolution),
        dataset,
        hashed.hash(),
    )
}

const DETECTOR_FILE: &str = "detector.bin";

/// `train`: optional detector pretraining (or reuse), then the main loop.
/// Returns the run directory.
pub fn cmd_train(
    config: &RunConfigFile,
    out: &Path,
    baseline: bool,
    resume: Option<&Path>,
    detector: Option<&Path>,
) -> Result<PathBuf> {
    let mut trainer = build_trainer(config, baseline)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut detector_heldout_px = None;
    if let Some(ckpt) = resume {
        trainer.restore_checkpoint(ckpt)?;
        println!(
            "resumed from {} at epoch {}, step {}",
            ckpt.display(),
            trainer.epoch,
            trainer.step
        );
    } else {
        match detector {
            Some(path) => {
                let tensors = read_tensors::<f32>(path)?;
                trainer.models.detector.params.load_values(tensors)?;
                println!("loaded pretrained detector from {}", path.display());
            }
            None => {
                println!(
                    "pretraining detector ({} epochs)...",
                    config.model.det_pretrain_epochs
                );
                let err = pretrain_detector(
                    &mut trainer.models,
                    &trainer.dataset.clone(),
                    trainer.cfg.holdout_frac,
                    trainer.cfg.seed,
                    config.model.pretrain_config(),
                )?;
                println!("detector held-out pixel error: {err:.3}px");
                detector_heldout_px = Some(err);
            }
        }
        // Persist the frozen detector so sibling runs can share it.
        write_tensors(
            &out.join(DETECTOR_FILE),
            &trainer.models.detector.params.export_values(),
        )?;
    }

    RunMeta {
        config_hash: trainer.config_hash.clone(),
        seed: trainer.cfg.seed,
        baseline,
        detector_heldout_px,
    }
    .save(out)?;

    trainer.train(out)?;

    // Final per-term losses from the last metrics record.
    let metrics = crate::trainer::read_metrics(&out.join("metrics.jsonl"))?;
    if let Some(last) = metrics.last() {
        println!("final step {}:", last.step);
        for v in &last.views {
            println!(
                "  view {}: gan_g {:.4} gan_d {:.4} cycle {:.4} identity {:.4} total {:.4}",
                v.view_id, v.gan_g, v.gan_d, v.cycle, v.identity, v.per_view_total
            );
        }
        println!(
            "  l3d a->b {:?} b->a {:?} total {:.4}",
            last.l3d_a_to_b, last.l3d_b_to_a, last.total
        );
    }
    Ok(out.to_path_buf())
}

/// Most recent checkpoint directory of a run.
pub fn latest_checkpoint(run_dir: &Path) -> Result<PathBuf> {
    let dir = run_dir.join("checkpoints");
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    entries
        .pop()
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoints under {}", dir.display())))
}

/// `eval`: restore a checkpoint and write the evaluation report.
pub fn cmd_eval(
    config: &RunConfigFile,
    checkpoint: &Path,
    report_path: &Path,
    baseline: bool,
) -> Result<EvalReport> {
    let mut trainer = build_trainer(config, baseline)?;
    trainer.restore_checkpoint(checkpoint)?;
    let run_id = checkpoint.display().to_string();
    let report = evaluate_run(&trainer, &run_id, baseline)?;
    report.save(report_path)?;
    println!(
        "eval over {} held-out frames: mpjpe {:.3} cm, cross-view residual {:.3} px",
        report.n_samples, report.mpjpe_cm, report.cross_view_residual_px
    );
    Ok(report)
}

/// `compare`: render real/joint/baseline grids for the given held-out
/// frames.
pub fn cmd_compare(
    config: &RunConfigFile,
    joint_ckpt: &Path,
    baseline_ckpt: &Path,
    frames: &[usize],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    if frames.is_empty() {
        return Err(Error::Config("compare needs at least one frame index".into()));
    }
    let mut joint = build_trainer(config, false)?;
    joint.restore_checkpoint(joint_ckpt)?;
    let mut baseline = build_trainer(config, true)?;
    baseline.restore_checkpoint(baseline_ckpt)?;
    let written = render_comparison(&joint, &baseline, frames, out)?;
    println!("wrote {} comparison grids to {}", written.len(), out.display());
    Ok(written)
}
