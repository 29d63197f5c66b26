use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{ForecastSet, SeriesValues};
use crate::dataset::{ForecastTask, TimeSeries};
use crate::model::{forecast_with, ForwardOptions, GlobalParams};
use crate::{Error, Result};

/// Where forecasts of a series start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    /// Forecast the last `horizon` observed points from what precedes them.
    HoldOut,
    /// Forecast `horizon` points past the end of the series.
    Future,
}

/// Forecasts one series on its own, reading nothing but `series`.
pub fn forecast_series(
    params: &GlobalParams,
    series: &TimeSeries,
    horizon: usize,
    window: Window,
    opts: &ForwardOptions,
) -> Result<SeriesValues> {
    let split = match window {
        Window::HoldOut => series.len().checked_sub(horizon).filter(|s| *s > 0),
        Window::Future => Some(series.len()).filter(|s| *s > 0),
    }
    .ok_or_else(|| {
        Error::Data(format!(
            "series {} ({} points) is too short to forecast {horizon} steps",
            series.item_id,
            series.len()
        ))
    })?;
    let cfg = &params.config;
    let task = ForecastTask::new(
        series,
        split,
        cfg.context_len,
        horizon,
        Arc::new(cfg.features.clone()),
        false,
    )?;
    let values = forecast_with(&task, params, opts, &mut ChaCha8Rng::seed_from_u64(0))?;
    Ok(SeriesValues {
        item_id: series.item_id.clone(),
        offset: split,
        values,
    })
}

/// Forecasts every series independently.
pub fn forecast_all(
    params: &GlobalParams,
    series: &[TimeSeries],
    horizon: usize,
    window: Window,
    opts: &ForwardOptions,
    model_id: &str,
    dataset_id: &str,
) -> Result<ForecastSet> {
    let items = series
        .par_iter()
        .map(|s| forecast_series(params, s, horizon, window, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForecastSet {
        model_id: model_id.to_string(),
        dataset_id: dataset_id.to_string(),
        items,
    })
}

/// The last `horizon` points of every series.
pub fn holdout_targets(series: &[TimeSeries], horizon: usize) -> Result<Vec<SeriesValues>> {
    series
        .iter()
        .map(|s| {
            let split = s.len().checked_sub(horizon).filter(|v| *v > 0).ok_or_else(|| {
                Error::Data(format!("series {} is shorter than the horizon", s.item_id))
            })?;
            Ok(SeriesValues {
                item_id: s.item_id.clone(),
                offset: split,
                values: s.values[split..].to_vec(),
            })
        })
        .collect()
}
