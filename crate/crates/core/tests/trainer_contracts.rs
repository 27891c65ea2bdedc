//! Trainer-level contracts: the baseline reduction (joint training with a
//! zero 3D weight equals independent per-view training), exact resume,
//! update discipline, and detector freezing.

mod common;

use common::{build_dataset, build_trainer, micro_config};
use mvpt_core::data::PersonId;
use mvpt_core::models::ParamSet;
use mvpt_core::trainer::read_metrics;

/// Largest relative parameter difference between two networks.
fn max_param_rel_diff(a: &ParamSet<f32>, b: &ParamSet<f32>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        for (x, y) in a.value(i).iter().zip(b.value(i).iter()) {
            let d = (*x as f64 - *y as f64).abs();
            let scale = (x.abs() as f64).max(y.abs() as f64).max(1e-3);
            worst = worst.max(d / scale);
        }
    }
    worst
}

#[test]
fn joint_lambda4_zero_matches_independent_single_view_trainers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config();
    let dataset = build_dataset(&cfg, dir.path(), 3);
    let mut w0 = cfg.loss;
    w0.lambda4 = 0.0;

    let mut joint = build_trainer(&cfg, dataset.clone(), w0, None, "joint");
    let mut solo_v0 = build_trainer(&cfg, dataset.clone(), w0, Some(vec!["v0".into()]), "solo0");
    let mut solo_v1 = build_trainer(&cfg, dataset.clone(), w0, Some(vec!["v1".into()]), "solo1");

    // Identical initialization per view regardless of the training pool.
    assert_eq!(
        joint.models.views[0].gen_to_b.params.content_hash(),
        solo_v0.models.views[0].gen_to_b.params.content_hash()
    );
    assert_eq!(
        joint.models.views[1].disc_a.params.content_hash(),
        solo_v1.models.views[0].disc_a.params.content_hash()
    );

    // Drive all three trainers through the same step sequence.
    let steps = 12usize;
    let order_a = joint.epoch_order(PersonId::A, 0);
    let order_b = joint.epoch_order(PersonId::B, 0);
    assert_eq!(order_a, solo_v0.epoch_order(PersonId::A, 0), "shared shuffle");
    for s in 0..steps {
        let t_a = order_a[s % order_a.len()];
        let t_b = order_b[s % order_b.len()];
        for trainer in [&mut joint, &mut solo_v0, &mut solo_v1] {
            let a = dataset
                .sample(PersonId::A, t_a, trainer.cfg.resolution, None)
                .unwrap();
            let b = dataset
                .sample(PersonId::B, t_b, trainer.cfg.resolution, None)
                .unwrap();
            trainer.train_step(&[(a, b)], 2e-4, None).unwrap();
        }
    }

    // Per-view parameter trajectories coincide within 1e-6 relative.
    for (solo, vi) in [(&solo_v0, 0usize), (&solo_v1, 1usize)] {
        let jv = &joint.models.views[vi];
        let sv = &solo.models.views[0];
        for (a, b) in [
            (&jv.gen_to_a.params, &sv.gen_to_a.params),
            (&jv.gen_to_b.params, &sv.gen_to_b.params),
            (&jv.disc_a.params, &sv.disc_a.params),
            (&jv.disc_b.params, &sv.disc_b.params),
        ] {
            let diff = max_param_rel_diff(a, b);
            assert!(
                diff <= 1e-6,
                "view {vi}: joint-vs-solo parameter drift {diff:.3e}"
            );
        }
    }
}

#[test]
fn min_max_discipline_and_detector_freezing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config();
    let dataset = build_dataset(&cfg, dir.path(), 5);
    let mut trainer = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "disc");
    let det0 = trainer.detector_param_hash();

    let a = dataset.sample(PersonId::A, 0, 32, None).unwrap();
    let b = dataset.sample(PersonId::B, 1, 32, None).unwrap();
    let g0 = trainer.gen_param_hash();
    let d0 = trainer.disc_param_hash();
    trainer.train_step(&[(a.clone(), b.clone())], 2e-4, None).unwrap();
    assert_ne!(trainer.gen_param_hash(), g0, "generators updated");
    assert_ne!(trainer.disc_param_hash(), d0, "discriminators updated");
    assert_eq!(trainer.detector_param_hash(), det0, "estimator frozen");

    // Gating discriminator updates freezes them bit-exactly.
    let mut gated = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "gated");
    gated.cfg.update_discriminators = false;
    let d0 = gated.disc_param_hash();
    let g0 = gated.gen_param_hash();
    gated.train_step(&[(a, b)], 2e-4, None).unwrap();
    assert_eq!(gated.disc_param_hash(), d0, "gated discriminators frozen");
    assert_ne!(gated.gen_param_hash(), g0);
    assert_eq!(gated.detector_param_hash(), det0);
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config();
    let dataset = build_dataset(&cfg, dir.path(), 7);

    // Uninterrupted: 2 epochs.
    let run_full = dir.path().join("run_full");
    let mut full = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "resume");
    full.cfg.epochs_run = 2;
    full.train(&run_full).unwrap();

    // Interrupted after epoch 1, resumed from its checkpoint.
    let run_ab = dir.path().join("run_ab");
    let mut first = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "resume");
    first.cfg.epochs_run = 1;
    first.train(&run_ab).unwrap();
    let mut resumed = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "resume");
    resumed.cfg.epochs_run = 2;
    resumed
        .restore_checkpoint(&run_ab.join("checkpoints").join("epoch_0001"))
        .unwrap();
    assert_eq!(resumed.epoch, 1);
    resumed.train(&run_ab).unwrap();

    // Epoch-2 metrics agree within 1e-6 and parameters match bitwise.
    let m_full = read_metrics(&run_full.join("metrics.jsonl")).unwrap();
    let m_ab = read_metrics(&run_ab.join("metrics.jsonl")).unwrap();
    assert_eq!(m_full.len(), m_ab.len());
    for (x, y) in m_full.iter().zip(&m_ab).filter(|(x, _)| x.epoch == 1) {
        assert_eq!(x.step, y.step);
        assert!((x.total - y.total).abs() <= 1e-6 * x.total.abs().max(1.0));
        for (vx, vy) in x.views.iter().zip(&y.views) {
            assert!((vx.per_view_total - vy.per_view_total).abs() <= 1e-6);
            assert!((vx.gan_d - vy.gan_d).abs() <= 1e-6);
        }
    }
    assert_eq!(full.gen_param_hash(), resumed.gen_param_hash());
    assert_eq!(full.disc_param_hash(), resumed.disc_param_hash());

    // Config-hash mismatch is rejected.
    let mut other = build_trainer(&cfg, dataset, cfg.loss, None, "different-hash");
    assert!(other
        .restore_checkpoint(&run_ab.join("checkpoints").join("epoch_0001"))
        .is_err());
}

#[test]
fn metrics_log_schema_and_seed_dependent_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config();
    let dataset = build_dataset(&cfg, dir.path(), 9);
    let run = dir.path().join("run");
    let mut trainer = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "metrics");
    trainer.cfg.epochs_run = 1;
    trainer.train(&run).unwrap();

    let records = read_metrics(&run.join("metrics.jsonl")).unwrap();
    let steps = trainer.train_range(PersonId::A).len().min(trainer.train_range(PersonId::B).len());
    assert_eq!(records.len(), steps, "one record per step");
    for r in &records {
        assert_eq!(r.views.len(), 2);
        assert!(r.l3d_a_to_b.is_some() && r.l3d_b_to_a.is_some());
        assert_eq!(r.config_hash, "metrics");
        for v in &r.views {
            assert!(v.per_view_total.is_finite());
            assert!(v.gan_d.is_finite());
            assert!(
                v.is_consistent(&trainer.weights),
                "per-view total consistent with its parts"
            );
        }
    }

    // Different seed -> different epoch order.
    let t1 = build_trainer(&cfg, dataset.clone(), cfg.loss, None, "o1");
    let mut cfg2 = micro_config();
    cfg2.train.seed = 12;
    let t2 = build_trainer(&cfg2, dataset, cfg2.loss, None, "o2");
    assert_ne!(
        t1.epoch_order(PersonId::A, 0),
        t2.epoch_order(PersonId::A, 0)
    );
}
