use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, psnr_from_mse, MetricsRow};
use super::step::{build_plan, plan_loss_and_grads};
use super::{config_hash, Precision, TrainConfig};
use crate::constraints::{Diagnostics, LossBreakdown};
use crate::data::{SceneDataset, Split};
use crate::diffmath::{AdamState, ParamTensor, Real, StepOutcome};
use crate::field::checkpoint::{read_tensors, write_tensors, NamedTensors};
use crate::field::{FieldConfig, RadianceField};
use crate::render::RenderConfig;
use crate::{Error, Result};

/// Sidecar of a checkpoint, stored next to it as `<file>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub step: u64,
    pub adam_t: u64,
    pub adam_skipped: u64,
    pub config_hash: String,
    pub precision: Precision,
    pub field: FieldConfig,
    pub train: TrainConfig,
    pub best_test_psnr: Option<(u64, f64)>,
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_meta(ckpt: &Path) -> Result<CheckpointMeta> {
    let path = sidecar_path(ckpt);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}

/// Loads the field stored in a checkpoint, using its sidecar for the
/// architecture.
pub fn load_field<F: Real>(ckpt: &Path) -> Result<(RadianceField<F>, CheckpointMeta)> {
    let tensors = read_tensors(ckpt)?;
    let meta = read_meta(ckpt)?;
    let params: NamedTensors = tensors
        .into_iter()
        .filter(|(n, _)| !n.starts_with("adam_"))
        .collect();
    let field = RadianceField::from_named_f32(meta.field.clone(), &params)
        .map_err(|e| Error::checkpoint(ckpt, e.to_string()))?;
    Ok((field, meta))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub outcome: StepOutcome,
}

impl StepReport {
    pub fn psnr_train(&self) -> f64 {
        psnr_from_mse(self.loss.rgb)
    }
}

/// Training state: parameters, optimiser moments and the step counter.
/// Step `t` draws all its randomness from stream `t` of the seed, so a
/// restored state continues exactly as an uninterrupted run would.
pub struct Trainer<'a, F: Real> {
    config: TrainConfig,
    field: RadianceField<F>,
    adam: AdamState<F>,
    step: u64,
    data: &'a SceneDataset,
    pub diagnostics: Diagnostics,
    pub best_test_psnr: Option<(u64, f64)>,
}

impl<'a, F: Real> Trainer<'a, F> {
    pub fn new(field: FieldConfig, config: TrainConfig, data: &'a SceneDataset) -> Result<Self> {
        Self::with_field(RadianceField::new(field)?, config, data)
    }

    pub fn with_field(
        field: RadianceField<F>,
        config: TrainConfig,
        data: &'a SceneDataset,
    ) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        if data.train.len() < 2 {
            return Err(Error::Invalid(format!(
                "training needs at least 2 views, dataset has {}",
                data.train.len()
            )));
        }
        let adam = AdamState::new(config.adam, &field.params().iter().collect::<Vec<_>>());
        Ok(Self {
            config,
            field,
            adam,
            step: 0,
            data,
            diagnostics: Diagnostics::default(),
            best_test_psnr: None,
        })
    }

    /// Restores a checkpoint written by [`save`](Self::save). The training
    /// configuration must match the one it was written with, up to the
    /// iteration count and output cadences.
    pub fn resume(ckpt: &Path, config: TrainConfig, data: &'a SceneDataset) -> Result<Self> {
        let meta = read_meta(ckpt)?;
        let want = config_hash(&meta.field, &config);
        if want != meta.config_hash {
            return Err(Error::checkpoint(
                ckpt,
                "training configuration differs from the one that wrote this checkpoint",
            ));
        }
        if meta.precision != Precision::F32 {
            warn!("checkpoint tensors are f32; a {:?} run resumes rounded", meta.precision);
        }
        let tensors = read_tensors(ckpt)?;
        let mut params = Vec::new();
        let mut moments = std::collections::HashMap::new();
        for (name, v) in tensors {
            if name.starts_with("adam_") {
                moments.insert(name, v);
            } else {
                params.push((name, v));
            }
        }
        let field = RadianceField::<F>::from_named_f32(meta.field.clone(), &params)
            .map_err(|e| Error::checkpoint(ckpt, e.to_string()))?;
        let mut trainer = Self::with_field(field, config, data)?;
        for (k, name) in trainer.field.names().to_vec().iter().enumerate() {
            for (prefix, buf) in [("adam_m.", &mut trainer.adam.m[k]), ("adam_v.", &mut trainer.adam.v[k])] {
                let key = format!("{prefix}{name}");
                let vals = moments
                    .get(&key)
                    .ok_or_else(|| Error::checkpoint(ckpt, format!("missing tensor {key}")))?;
                if vals.len() != buf.len() {
                    return Err(Error::checkpoint(ckpt, format!("tensor {key} has the wrong size")));
                }
                for (d, &s) in buf.iter_mut().zip(vals) {
                    *d = F::c(s as f64);
                }
            }
        }
        trainer.adam.t = meta.adam_t;
        trainer.adam.skipped = meta.adam_skipped;
        trainer.step = meta.step;
        trainer.best_test_psnr = meta.best_test_psnr;
        Ok(trainer)
    }

    pub fn save(&self, ckpt: &Path) -> Result<()> {
        let mut tensors = self.field.to_named_f32();
        let names = self.field.names();
        for (prefix, bufs) in [("adam_m.", &self.adam.m), ("adam_v.", &self.adam.v)] {
            for (name, buf) in names.iter().zip(bufs) {
                tensors.push((
                    format!("{prefix}{name}"),
                    buf.iter().map(|v| v.f64() as f32).collect(),
                ));
            }
        }
        write_tensors(ckpt, &tensors)?;
        let meta = CheckpointMeta {
            step: self.step,
            adam_t: self.adam.t,
            adam_skipped: self.adam.skipped,
            config_hash: config_hash(self.field.config(), &self.config),
            precision: self.config.precision,
            field: self.field.config().clone(),
            train: self.config.clone(),
            best_test_psnr: self.best_test_psnr,
        };
        let path = sidecar_path(ckpt);
        let text = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn field(&self) -> &RadianceField<F> {
        &self.field
    }

    pub fn into_field(self) -> RadianceField<F> {
        self.field
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn adam(&self) -> &AdamState<F> {
        &self.adam
    }

    /// Runs one step. A non-finite loss aborts with the per-term values.
    pub fn train_step(&mut self) -> Result<StepReport> {
        let plan = build_plan(&self.field, self.data, &self.config, self.step)?;
        let loss = plan_loss_and_grads(&mut self.field, &plan, &self.config, &mut self.diagnostics)?;
        let lr = self.config.learning_rate(self.step);
        let mut params: Vec<&mut ParamTensor<F>> = self.field.params_mut().iter_mut().collect();
        let outcome = self.adam.step(&mut params, lr);
        let report = StepReport {
            step: self.step,
            lr,
            loss,
            outcome,
        };
        self.step += 1;
        Ok(report)
    }

    /// Mean test PSNR at the periodic-evaluation resolution.
    pub fn quick_test_psnr(&self) -> Result<f64> {
        let render = self.eval_render_config();
        Ok(evaluate(
            &self.field,
            self.data,
            Split::Test,
            &render,
            self.config.eval_downscale,
            self.config.eval_views,
        )?
        .mean)
    }

    pub fn eval_render_config(&self) -> RenderConfig {
        RenderConfig {
            n_samples: self.config.n_samples,
            stratified: false,
            seed: self.config.seed,
            background: self.data.background,
            chunk_rays: 256,
        }
    }

    /// Trains until `end` (exclusive step index), calling `sink` for each
    /// metrics row and `checkpoint` at the configured cadence. A row is
    /// produced every `log_every` steps, on both sides of each schedule
    /// breakpoint, and after the last configured iteration.
    pub fn run_until(
        &mut self,
        end: u64,
        mut sink: impl FnMut(&MetricsRow) -> Result<()>,
        mut checkpoint: impl FnMut(&Self) -> Result<()>,
    ) -> Result<()> {
        while self.step < end {
            let report = self.train_step()?;
            let t = report.step;
            // Keyed to the configured length, not `end`, so a run split at a
            // checkpoint logs the same rows as an uninterrupted one.
            let last = t + 1 == self.config.iterations;
            let eval_now = self.config.eval_every > 0
                && !self.data.test.is_empty()
                && (t % self.config.eval_every == 0 || last);
            let at_transition = self
                .config
                .schedule
                .breakpoints
                .iter()
                .any(|b| b.step == t || b.step == t + 1);
            if t % self.config.log_every == 0 || last || eval_now || at_transition {
                let psnr_test = if eval_now {
                    let p = self.quick_test_psnr()?;
                    if self.best_test_psnr.is_none_or(|(_, b)| p > b) {
                        self.best_test_psnr = Some((t, p));
                    }
                    Some(p)
                } else {
                    None
                };
                let l = &report.loss;
                let row = MetricsRow {
                    step: t,
                    alpha: l.alpha,
                    lr: report.lr,
                    loss_rgb: l.rgb,
                    loss_depth: l.depth,
                    loss_cv: l.cross_view,
                    loss_sparse: l.sparsity,
                    loss_reg: l.smoothness,
                    total: l.total,
                    psnr_train: report.psnr_train(),
                    psnr_test,
                };
                info!(
                    "step {t} loss {:.5} psnr {:.2}{}",
                    l.total,
                    row.psnr_train,
                    psnr_test.map_or(String::new(), |p| format!(" test {p:.2}"))
                );
                sink(&row)?;
            }
            if self.config.checkpoint_every > 0 && self.step.is_multiple_of(self.config.checkpoint_every) {
                checkpoint(self)?;
            }
        }
        Ok(())
    }

    /// Runs to the configured iteration count, collecting the metrics rows.
    pub fn run(&mut self) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        let end = self.config.iterations;
        self.run_until(
            end,
            |r| {
                rows.push(r.clone());
                Ok(())
            },
            |_| Ok(()),
        )?;
        Ok(rows)
    }
}
