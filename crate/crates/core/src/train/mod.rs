//! Loss, schedule, metrics, and the deterministic training and ablation loops.

mod ablate;
mod config;
mod loss;
mod metrics;
mod runner;

pub use ablate::{ablation_settings, AblationAxis, K_GRID, THRESHOLD_GRID};
pub use config::{lr_at, RunConfig};
pub use loss::cross_entropy;
pub use metrics::{compute_miou, Metrics};
pub use runner::{
    batch_loss, check_dataset, evaluate, load_checkpoint, prepare_split, selection_metric, targets, train_loop,
    EpochRecord, TrainOutcome, TrainOutputs, METRICS_CSV_HEADER,
};
