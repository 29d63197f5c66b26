//! Representation backbones, the closed-form local head and forecasting.

mod backbone;
mod forecast;
mod local;
mod params;

pub use backbone::{
    lstm_cell, step, BackboneVars, CellState, LstmState, LstmWeights, Mode, ModelVars,
};
pub use forecast::{
    adapt_at_prediction_only, forecast, forecast_global_head, forecast_with, forward_task,
    predict, represent, ForwardOptions, HeadMode, Strategy, TaskForward,
};
pub use local::{fit_local, fit_local_on_tape, normal_equation_residual, LocalWeights};
pub use params::{
    Adaptation, BackboneKind, GlobalParams, ModelConfig, NamedTensor, DEFAULT_ZONEOUT,
    GAMMA_RAW_INIT,
};
