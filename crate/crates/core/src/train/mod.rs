//! Training loop, checkpoints, metrics logging and evaluation.

mod ablation;
mod config;
mod metrics;
mod step;
mod trainer;

pub use ablation::{
    ablation_configs, ablation_suite, append_ablation_csv, final_report, next_run_id,
    row_from_report, run_configuration, AblationRow, ABLATION_LABELS,
};
pub use config::{config_hash, Precision, TrainConfig};
pub use metrics::{
    append_metrics_csv, evaluate, image_mse, psnr_from_mse, read_metrics_csv, write_metrics_csv,
    EvalReport, MetricsRow, SplitReport, METRICS_HEADER, PSNR_CAP,
};
pub use step::{build_plan, plan_loss, plan_loss_and_grads, record_loss, StepPlan};
pub use trainer::{load_field, read_meta, sidecar_path, CheckpointMeta, StepReport, Trainer};
