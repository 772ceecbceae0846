use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalReport};
use super::{TrainConfig, Trainer};
use crate::constraints::ConstraintWeights;
use crate::data::{SceneDataset, Split};
use crate::field::FieldConfig;
use crate::render::RenderConfig;
use crate::{Error, Result};

pub const ABLATION_LABELS: [&str; 5] = [
    "RGB only",
    "+ Depth ranking",
    "+ Cross-view consistency",
    "+ Sparsity",
    "+ All constraints",
];

/// The five cumulative configurations, each keeping the base weights of the
/// terms enabled so far and zeroing the rest.
pub fn ablation_configs(base: &TrainConfig) -> Vec<(&'static str, TrainConfig)> {
    let w = &base.weights;
    ABLATION_LABELS
        .iter()
        .enumerate()
        .map(|(k, &label)| {
            let weights = ConstraintWeights {
                lambda_depth: if k >= 1 { w.lambda_depth } else { 0.0 },
                lambda_cv: if k >= 2 { w.lambda_cv } else { 0.0 },
                lambda_sparse: if k >= 3 { w.lambda_sparse } else { 0.0 },
                lambda_reg: if k >= 4 { w.lambda_reg } else { 0.0 },
            };
            (
                label,
                TrainConfig {
                    weights,
                    ..base.clone()
                },
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub run_id: u64,
    pub configuration: String,
    pub lambda_depth: f64,
    pub lambda_cv: f64,
    pub lambda_sparse: f64,
    pub lambda_reg: f64,
    pub train_psnr: f64,
    pub test_psnr: f64,
    pub gap: f64,
}

/// Full-resolution train and test PSNR of a field.
pub fn final_report<F: crate::diffmath::Real>(
    field: &crate::field::RadianceField<F>,
    data: &SceneDataset,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let render = RenderConfig {
        n_samples: config.n_samples,
        stratified: false,
        seed: config.seed,
        background: data.background,
        chunk_rays: 256,
    };
    let train = evaluate(field, data, Split::Train, &render, 1, 0)?;
    let test = if data.test.is_empty() {
        None
    } else {
        Some(evaluate(field, data, Split::Test, &render, 1, 0)?)
    };
    Ok(EvalReport::new(Some(train), test))
}

/// Trains one configuration in f32 and reports full-resolution PSNR.
pub fn run_configuration(
    data: &SceneDataset,
    field: &FieldConfig,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let mut trainer = Trainer::<f32>::new(field.clone(), config.clone(), data)?;
    trainer.run()?;
    final_report(trainer.field(), data, config)
}

/// Trains the five cumulative configurations and returns their rows.
pub fn ablation_suite(
    data: &SceneDataset,
    field: &FieldConfig,
    base: &TrainConfig,
    run_id: u64,
) -> Result<Vec<AblationRow>> {
    if data.test.is_empty() {
        return Err(Error::Invalid("ablation needs test views".into()));
    }
    ablation_configs(base)
        .into_iter()
        .map(|(label, cfg)| {
            log::info!("ablation: {label}");
            let report = run_configuration(data, field, &cfg)?;
            Ok(row_from_report(run_id, label, &cfg, &report))
        })
        .collect()
}

pub fn row_from_report(run_id: u64, label: &str, cfg: &TrainConfig, report: &EvalReport) -> AblationRow {
    let train = report.train.as_ref().map_or(f64::NAN, |r| r.mean);
    let test = report.test.as_ref().map_or(f64::NAN, |r| r.mean);
    AblationRow {
        run_id,
        configuration: label.to_string(),
        lambda_depth: cfg.weights.lambda_depth,
        lambda_cv: cfg.weights.lambda_cv,
        lambda_sparse: cfg.weights.lambda_sparse,
        lambda_reg: cfg.weights.lambda_reg,
        train_psnr: train,
        test_psnr: test,
        gap: train - test,
    }
}

/// One past the largest run id already in `path`; 0 for a new file.
pub fn next_run_id(path: &Path) -> Result<u64> {
    if !path.exists() {
        return Ok(0);
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut next = 0;
    for row in r.deserialize::<AblationRow>() {
        next = next.max(row?.run_id + 1);
    }
    Ok(next)
}

/// Appends rows to the table at `path`, never rewriting earlier runs.
pub fn append_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
