use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constraints::{ConstraintSettings, ConstraintWeights, Schedule};
use crate::diffmath::{decayed_lr, AdamConfig};
use crate::field::FieldConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Rays per step, drawn as `rays_per_batch / patch_size²` square patches.
    pub rays_per_batch: usize,
    pub patch_size: usize,
    pub n_samples: usize,
    pub stratified: bool,
    pub lr0: f64,
    pub gamma: f64,
    /// The rate at step `t` is `lr0·γ^(t / lr_decay_steps)`; 1 decays every
    /// step.
    pub lr_decay_steps: u64,
    pub seed: u64,
    /// Metrics row cadence.
    pub log_every: u64,
    /// Test-PSNR cadence; 0 disables periodic evaluation.
    pub eval_every: u64,
    /// Per-axis downscale of the periodic test renders.
    pub eval_downscale: usize,
    /// Test views used by periodic evaluation; all when 0.
    pub eval_views: usize,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub precision: Precision,
    pub weights: ConstraintWeights,
    pub schedule: Schedule,
    pub constraints: ConstraintSettings,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 150_000,
            rays_per_batch: 1024,
            patch_size: 4,
            n_samples: 64,
            stratified: true,
            lr0: 5e-4,
            gamma: 0.998,
            lr_decay_steps: 1,
            seed: 0,
            log_every: 100,
            eval_every: 500,
            eval_downscale: 2,
            eval_views: 0,
            checkpoint_every: 10_000,
            precision: Precision::F32,
            weights: ConstraintWeights::default(),
            schedule: Schedule::default(),
            constraints: ConstraintSettings::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Small batches for CPU runs on the 64×64 toy scene.
    pub fn desk(iterations: u64) -> Self {
        Self {
            iterations,
            rays_per_batch: 128,
            n_samples: 32,
            lr0: 1e-3,
            lr_decay_steps: 10,
            constraints: ConstraintSettings {
                ranking_pairs: 128,
                sparsity_points: 256,
                ..ConstraintSettings::default()
            },
            checkpoint_every: 0,
            ..Self::default()
        }
    }

    /// Learning rate applied at step `t`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        if self.lr_decay_steps == 1 {
            decayed_lr(self.lr0, self.gamma, t)
        } else {
            self.lr0 * self.gamma.powf(t as f64 / self.lr_decay_steps as f64)
        }
    }

    pub fn patches_per_batch(&self) -> usize {
        self.rays_per_batch / (self.patch_size * self.patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.rays_per_batch == 0 {
            return Err(Error::Config("rays_per_batch and patch_size must be positive".into()));
        }
        if !self.rays_per_batch.is_multiple_of(self.patch_size * self.patch_size) {
            return Err(Error::Config(format!(
                "rays_per_batch {} is not divisible by patch_size² = {}",
                self.rays_per_batch,
                self.patch_size * self.patch_size
            )));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.lr_decay_steps == 0 {
            return Err(Error::Config("lr_decay_steps must be at least 1".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("n_samples must be at least 2".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if self.eval_downscale == 0 {
            return Err(Error::Config("eval_downscale must be at least 1".into()));
        }
        self.weights.validate()?;
        self.schedule.validate()?;
        self.constraints.validate()
    }
}

/// Hex SHA-256 over everything that changes the optimisation trajectory.
/// The iteration count and output cadences are excluded so a run can be
/// resumed with a different end point.
pub fn config_hash(field: &FieldConfig, train: &TrainConfig) -> String {
    let mut t = train.clone();
    t.iterations = 0;
    t.log_every = 1;
    t.eval_every = 0;
    t.eval_views = 0;
    t.eval_downscale = 1;
    t.checkpoint_every = 0;
    let doc = serde_json::json!({ "field": field, "train": t });
    let digest = Sha256::digest(doc.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
