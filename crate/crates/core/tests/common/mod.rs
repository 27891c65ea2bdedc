//! Shared fixtures for the integration suites: a tiny synthetic dataset and
//! trainer constructors at micro scale.

use std::path::Path;
use std::sync::Arc;

use mvpt_core::config::RunConfigFile;
use mvpt_core::data::{synth_scene, Dataset, SynthConfig};
use mvpt_core::losses::LossWeights;
use mvpt_core::trainer::{TrainConfig, Trainer};

pub fn micro_config() -> RunConfigFile {
    let mut cfg = RunConfigFile::default();
    cfg.data.synth.views = 2;
    cfg.data.synth.frames = 24;
    cfg.data.synth.frame_size = 72;
    cfg.model.gen_base_channels = 4;
    cfg.model.gen_res_blocks = 1;
    cfg.model.gen_head_kernel = 3;
    cfg.model.disc_base_channels = 6;
    cfg.model.det_base_channels = 6;
    cfg.model.det_pretrain_epochs = 0;
    cfg.loss.lambda3 = 0.0;
    cfg.train.resolution = 32;
    cfg.train.epochs_run = 1;
    cfg.train.epochs_constant = 100;
    cfg.train.epochs_decay = 200;
    cfg.train.seed = 11;
    cfg.train.holdout_frac = 0.2;
    cfg.train.checkpoint_interval = 1;
    cfg.train.pool_size = 4;
    cfg
}

pub fn build_dataset(cfg: &RunConfigFile, dir: &Path, seed: u64) -> Arc<Dataset> {
    let synth: SynthConfig = cfg.data.synth.to_synth_config();
    let manifest = synth_scene(&synth, seed, dir).expect("synth scene");
    Arc::new(Dataset::from_manifest(manifest, dir.to_path_buf()).expect("dataset"))
}

pub fn build_trainer(
    cfg: &RunConfigFile,
    dataset: Arc<Dataset>,
    weights: LossWeights,
    views: Option<Vec<String>>,
    tag: &str,
) -> Trainer<f32> {
    let train = TrainConfig {
        views,
        ..cfg.train.clone()
    };
    Trainer::new(
        train,
        weights,
        cfg.model.to_model_config(cfg.train.resolution),
        dataset,
        tag.to_string(),
    )
    .expect("trainer")
}
