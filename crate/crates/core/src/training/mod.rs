//! Estimation of the global parameters: loss, optimizer, training loop,
//! random search and the ablation grid.

mod ablation;
mod adam;
mod config;
mod loss;
mod search;
mod trainer;

pub use ablation::{ablation_grid, ablation_label, parse_ablation_label};
pub use adam::{adam_step, global_norm, AdamConfig, OptimizerState, StepReport};
pub use config::{SearchSpace, TrainConfig};
pub use loss::{smape_loss, smape_loss_value};
pub use search::{
    plan_search, plan_with_configs, random_search, rank, run_plan, run_trial, selection_score,
    SearchPlan, TrialResult, TrialStatus,
};
pub use trainer::{
    batch_gradient, batch_loss_on_tape, eligible_series, init_params, sample_batch, task_loss,
    train, train_with_observer, BatchTask, Checkpoint, LogEntry, TrainOutcome, CHECKPOINTS_AVERAGED,
    CHECKPOINT_EVERY, MAX_CONSECUTIVE_SKIPS,
};
