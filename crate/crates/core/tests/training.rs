mod common;

use pgnerf::constraints::ConstraintWeights;
use pgnerf::field::{FieldConfig, RadianceField};
use pgnerf::train::{
    build_plan, plan_loss, read_metrics_csv, write_metrics_csv, MetricsRow, TrainConfig, Trainer,
};

fn run_rows(iterations: u64) -> (Vec<MetricsRow>, Vec<f32>) {
    let data = common::small_scene(16);
    let mut t = Trainer::<f32>::new(common::tiny_field(1), common::tiny_train_config(iterations), &data).unwrap();
    let rows = t.run().unwrap();
    (rows, t.field().flat_values())
}

#[test]
fn zero_iterations_keep_the_initialisation() {
    let data = common::small_scene(16);
    let mut t = Trainer::<f32>::new(common::tiny_field(1), common::tiny_train_config(0), &data).unwrap();
    assert!(t.run().unwrap().is_empty());
    let init = RadianceField::<f32>::new(common::tiny_field(1)).unwrap();
    assert_eq!(t.field().flat_values(), init.flat_values());
    assert_eq!(t.step(), 0);
}

#[test]
fn same_seed_gives_identical_metrics_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let (rows, _) = run_rows(6);
        let path = dir.path().join(name);
        write_metrics_csv(&path, &rows).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let back = read_metrics_csv(&dir.path().join("a.csv")).unwrap();
    assert_eq!(back, run_rows(6).0);
}

#[test]
fn different_seed_changes_the_run() {
    let data = common::small_scene(16);
    let mut cfg = common::tiny_train_config(3);
    cfg.seed = 9;
    let mut t = Trainer::<f32>::new(common::tiny_field(1), cfg, &data).unwrap();
    assert_ne!(t.run().unwrap(), run_rows(3).0);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let (straight, params) = run_rows(7);
    let data = common::small_scene(16);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("mid.ckpt");

    let cfg = common::tiny_train_config(7);
    let mut first = Trainer::<f32>::new(common::tiny_field(1), cfg.clone(), &data).unwrap();
    let mut rows = Vec::new();
    first
        .run_until(5, |r| {
            rows.push(r.clone());
            Ok(())
        }, |_| Ok(()))
        .unwrap();
    first.save(&ckpt).unwrap();
    drop(first);

    let mut second = Trainer::<f32>::resume(&ckpt, cfg, &data).unwrap();
    assert_eq!(second.step(), 5);
    rows.extend(second.run().unwrap());
    assert_eq!(rows, straight);
    assert_eq!(second.field().flat_values(), params);
}

#[test]
fn resume_rejects_a_changed_config() {
    let data = common::small_scene(16);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("c.ckpt");
    let cfg = common::tiny_train_config(2);
    let mut t = Trainer::<f32>::new(common::tiny_field(1), cfg.clone(), &data).unwrap();
    t.run().unwrap();
    t.save(&ckpt).unwrap();
    let mut changed = cfg;
    changed.lr0 *= 2.0;
    assert!(Trainer::<f32>::resume(&ckpt, changed, &data).is_err());
}

#[test]
fn logged_terms_match_recomputation() {
    let data = common::small_scene(16);
    let cfg = common::tiny_train_config(5);
    let mut t = Trainer::<f32>::new(common::tiny_field(1), cfg.clone(), &data).unwrap();
    for _ in 0..5 {
        let before = t.field().clone();
        let step = t.step();
        let report = t.train_step().unwrap();
        let plan = build_plan(&before, &data, &cfg, step).unwrap();
        let again = plan_loss(&before, &plan, &cfg).unwrap();
        assert_eq!(report.loss, again, "step {step}");
        let l = &report.loss;
        let aux = l.depth + l.cross_view + l.sparsity + l.smoothness;
        assert!((l.total - (l.rgb + l.alpha * aux)).abs() <= 1e-6 * l.total.abs().max(1.0));
        assert!(l.depth > 0.0 || l.cross_view > 0.0 || l.sparsity > 0.0);
    }
}

#[test]
fn metrics_rows_follow_the_logging_cadence() {
    let (rows, _) = run_rows(7);
    let steps: Vec<u64> = rows.iter().map(|r| r.step).collect();
    assert_eq!(steps, (0..7).collect::<Vec<_>>());
    let evals: Vec<u64> = rows.iter().filter(|r| r.psnr_test.is_some()).map(|r| r.step).collect();
    assert_eq!(evals, [0, 3, 6]);
    assert!(rows.iter().all(|r| r.alpha == 0.008));
}

/// Desk network on the 64×64 toy scene, RGB loss only: the mean train PSNR
/// rises across consecutive 500-step windows.
#[test]
fn rgb_only_train_psnr_rises_window_to_window() {
    let data = common::small_scene(64);
    let cfg = TrainConfig {
        log_every: 1,
        eval_every: 0,
        weights: ConstraintWeights {
            lambda_depth: 0.0,
            lambda_cv: 0.0,
            lambda_sparse: 0.0,
            lambda_reg: 0.0,
        },
        ..TrainConfig::desk(2000)
    };
    let mut t = Trainer::<f32>::new(FieldConfig::desk(), cfg, &data).unwrap();
    let rows = t.run().unwrap();
    assert_eq!(rows.len(), 2000);
    let means: Vec<f64> = rows
        .chunks(500)
        .map(|w| w.iter().map(|r| r.psnr_train).sum::<f64>() / w.len() as f64)
        .collect();
    assert!(means.windows(2).all(|p| p[1] > p[0]), "{means:?}");
}
