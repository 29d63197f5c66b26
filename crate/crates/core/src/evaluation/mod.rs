//! Accuracy metrics, aggregation across datasets and median ensembles.

mod backtest;
mod ensemble;
mod export;
mod metrics;
mod report;

pub use backtest::{forecast_all, forecast_series, holdout_targets, Window};
pub use ensemble::ensemble_median;
pub use export::{
    forecast_rows, forecasts_from_jsonl, forecasts_to_jsonl, metric_rows, report_to_jsonl,
    write_atomic, ForecastRow, MetricRow,
};
pub use metrics::{
    aggregate, align, mape_metric, metric, nd_metric, smape_metric, smape_series, DatasetScore,
    ForecastSet, MetricKind, SeriesValues,
};
pub use report::{mean_ci, report, MetricReport, ModelScore, Z_95};
