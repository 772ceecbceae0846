use std::path::{Path, PathBuf};

use pgnerf::data::LoadOptions;
use pgnerf::field::FieldConfig;
use pgnerf::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs besides the paths given on the command line.
/// Unknown keys are rejected; every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub field: FieldConfig,
    pub dataset: LoadOptions,
    /// Dataset directory, used when `--data` is absent.
    pub data: Option<PathBuf>,
    /// Depth-prior directory; `<data>/depth` when unset.
    pub depth_priors: Option<PathBuf>,
    /// Output directory, used when `--out` is absent.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train
            .validate()
            .and_then(|_| self.field.validate())
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"iters": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        assert!(serde_json::from_str::<RunConfig>(r#"{"lr": 1}"#).is_err());
    }

    #[test]
    fn nested_override() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"train": {"iterations": 7, "weights": {"lambda_cv": 0.5}}, "field": {"hidden_width": 32}}"#,
        )
        .unwrap();
        assert_eq!(cfg.train.iterations, 7);
        assert_eq!(cfg.train.weights.lambda_cv, 0.5);
        assert_eq!(cfg.train.weights.lambda_depth, 0.1);
        assert_eq!(cfg.field.hidden_width, 32);
    }

    #[test]
    fn shipped_desk_config_matches_the_presets() {
        let cfg: RunConfig = serde_json::from_str(include_str!("../../../configs/desk.json")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.field, FieldConfig::desk());
        let preset = TrainConfig::desk(5000);
        assert_eq!(cfg.train.lr0, preset.lr0);
        assert_eq!(cfg.train.lr_decay_steps, preset.lr_decay_steps);
        assert_eq!(cfg.train.rays_per_batch, preset.rays_per_batch);
        assert_eq!(cfg.train.n_samples, preset.n_samples);
        assert_eq!(cfg.train.constraints, preset.constraints);
        assert_eq!(cfg.train.weights, preset.weights);
    }

    #[test]
    fn shipped_ablation_config_scales_the_desk_weights() {
        let cfg: RunConfig = serde_json::from_str(include_str!("../../../configs/toy-ablation.json")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.field, FieldConfig::desk());
        let preset = TrainConfig::desk(5000);
        let (w, p) = (&cfg.train.weights, &preset.weights);
        assert_eq!(w.lambda_depth, 40.0 * p.lambda_depth);
        assert_eq!(w.lambda_cv, 40.0 * p.lambda_cv);
        assert_eq!(w.lambda_sparse, 40.0 * p.lambda_sparse);
        assert_eq!(w.lambda_reg, 40.0 * p.lambda_reg);
        assert_eq!(cfg.train.constraints, preset.constraints);
        assert_eq!(cfg.train.lr_decay_steps, preset.lr_decay_steps);
    }
}
