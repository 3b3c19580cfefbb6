//! Optimization, retrieval metrics and the ablation harness.

mod ablation;
mod adam;
mod metrics;
mod structure;
mod trainer;

pub use ablation::{run_ablation, AblationRow, AblationTable, AblationVariant};
pub use adam::{adam_step, AdamConfig, LrSchedule, OptimizerState};
pub use metrics::{compute_metrics, EvalReport, MetricsReport, RankedExample};
pub use structure::{permutation_null, quantile, roc_auc, structure_auc, StructureSample};
pub use trainer::{
    encode_dataset, evaluate, evaluate_scores, prepare_dataset, rank_examples, structure_samples, train,
    train_split, EpochLog, TrainOutcome, VALIDATION_FRACTION,
};
