use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Frequency, TimeSeries};
use crate::{Error, Result};

/// Which covariates the network sees, and how.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub lags: Vec<usize>,
    /// Append `ln(scale)` as a covariate.
    pub log_scale: bool,
    /// Divide the age covariate by the context length.
    pub normalize_age: bool,
}

impl FeatureSpec {
    pub fn for_frequency(freq: Frequency) -> Self {
        Self {
            lags: freq.default_lags().to_vec(),
            log_scale: true,
            normalize_age: false,
        }
    }

    /// Covariate dimension `p`.
    pub fn dim(&self) -> usize {
        self.lags.len() + 1 + usize::from(self.log_scale)
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }
}

/// Covariates `x_t` at one position of a task.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateVector {
    pub lagged_values: Vec<f64>,
    pub age: f64,
    pub log_scale: Option<f64>,
}

impl CovariateVector {
    pub fn dim(&self) -> usize {
        self.lagged_values.len() + 1 + usize::from(self.log_scale.is_some())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.lagged_values.clone();
        v.push(self.age);
        v.extend(self.log_scale);
        v
    }
}

/// Where the value of a lag slot comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LagSource {
    /// Before the first observation of the series; reads 0.
    Padding,
    /// Real observation, already divided by the task scale.
    Observed(f64),
    /// Horizon step `k` (0-based): a prior forecast, or the true value
    /// under teacher forcing.
    Horizon(usize),
}

/// Mean absolute value of the real context observations, or 1 when that is 0.
pub fn compute_scale(context: &[f64]) -> f64 {
    if context.is_empty() {
        return 1.0;
    }
    let m = context.iter().map(|v| v.abs()).sum::<f64>() / context.len() as f64;
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// A context/horizon split of one series.
///
/// Positions are 1-based: `1..=context_len` is the context window, whose
/// first `pad_count` positions precede the series start and are zero padding;
/// `context_len + 1..=context_len + horizon` is the forecast horizon.
#[derive(Clone, Debug)]
pub struct ForecastTask {
    pub item_id: String,
    /// Number of observations before the horizon (series index of the first
    /// forecast point).
    pub split: usize,
    pub context_len: usize,
    pub horizon: usize,
    pub pad_count: usize,
    pub scale: f64,
    /// True horizon values, when known.
    pub target: Option<Vec<f64>>,
    pub features: Arc<FeatureSpec>,
    /// Observations from series index `history_start` up to `split`.
    history: Vec<f64>,
    history_start: usize,
}

impl ForecastTask {
    /// Builds the task forecasting `series[split..split + horizon]` from the
    /// `context_len` positions before it.
    pub fn new(
        series: &TimeSeries,
        split: usize,
        context_len: usize,
        horizon: usize,
        features: Arc<FeatureSpec>,
        with_target: bool,
    ) -> Result<Self> {
        if context_len == 0 || horizon == 0 {
            return Err(Error::config(
                "context_len/horizon",
                "context length and horizon must be at least 1",
            ));
        }
        if split == 0 || split > series.len() {
            return Err(Error::Data(format!(
                "series {}: split {split} outside 1..={}",
                series.item_id,
                series.len()
            )));
        }
        let target = if with_target {
            if split + horizon > series.len() {
                return Err(Error::Data(format!(
                    "series {}: horizon {split}+{horizon} runs past its {} points",
                    series.item_id,
                    series.len()
                )));
            }
            Some(series.values[split..split + horizon].to_vec())
        } else {
            None
        };
        let ctx_first = split.saturating_sub(context_len);
        let history_start = ctx_first.saturating_sub(features.max_lag());
        Ok(Self {
            item_id: series.item_id.clone(),
            split,
            context_len,
            horizon,
            pad_count: context_len.saturating_sub(split),
            scale: compute_scale(&series.values[ctx_first..split]),
            target,
            features,
            history: series.values[history_start..split].to_vec(),
            history_start,
        })
    }

    pub fn len(&self) -> usize {
        self.context_len + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Series index of position `t` (negative inside the padding).
    pub fn series_index(&self, t: usize) -> isize {
        self.split as isize - self.context_len as isize + t as isize - 1
    }

    pub fn is_padding(&self, t: usize) -> bool {
        t <= self.pad_count
    }

    /// Context positions holding real observations.
    pub fn real_context(&self) -> RangeInclusive<usize> {
        (self.pad_count + 1)..=self.context_len
    }

    /// Raw observation at a series index before the split.
    fn observation(&self, s: usize) -> f64 {
        debug_assert!(s >= self.history_start && s < self.split);
        self.history[s - self.history_start]
    }

    /// Context observations at the real positions, divided by the scale.
    pub fn scaled_context(&self) -> Vec<f64> {
        self.real_context()
            .map(|t| self.observation(self.series_index(t) as usize) / self.scale)
            .collect()
    }

    pub fn lag_source(&self, t: usize, lag: usize) -> LagSource {
        let s = self.series_index(t) - lag as isize;
        if s < 0 {
            LagSource::Padding
        } else if (s as usize) < self.split {
            LagSource::Observed(self.observation(s as usize) / self.scale)
        } else {
            LagSource::Horizon(s as usize - self.split)
        }
    }

    /// Distance of position `t` from the first observation.
    pub fn age(&self, t: usize) -> f64 {
        let a = self.series_index(t) as f64;
        if self.features.normalize_age {
            a / self.context_len as f64
        } else {
            a
        }
    }

    pub fn log_scale(&self) -> Option<f64> {
        self.features.log_scale.then(|| self.scale.ln())
    }

    /// Covariates at position `t`, with `forecasts_so_far` (in original
    /// units) filling lags that point into the horizon.
    pub fn covariates(&self, t: usize, forecasts_so_far: &[f64]) -> Result<CovariateVector> {
        if t == 0 || t > self.len() {
            return Err(Error::Data(format!(
                "position {t} outside 1..={}",
                self.len()
            )));
        }
        let lagged_values = self
            .features
            .lags
            .iter()
            .map(|&lag| match self.lag_source(t, lag) {
                LagSource::Padding => Ok(0.0),
                LagSource::Observed(v) => Ok(v),
                LagSource::Horizon(k) => forecasts_so_far
                    .get(k)
                    .map(|f| f / self.scale)
                    .ok_or_else(|| {
                        Error::Data(format!(
                            "lag {lag} at position {t} needs forecast {} of which only {} exist",
                            k + 1,
                            forecasts_so_far.len()
                        ))
                    }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CovariateVector {
            lagged_values,
            age: self.age(t),
            log_scale: self.log_scale(),
        })
    }
}

/// Admissible split points for training slices of a series.
pub fn admissible_splits(
    series_len: usize,
    horizon: usize,
    min_history: usize,
) -> Option<RangeInclusive<usize>> {
    let lo = min_history.max(1);
    let hi = series_len.checked_sub(horizon)?;
    (lo <= hi).then_some(lo..=hi)
}

/// Draws a uniformly random training slice with at least `min_history`
/// real observations in its context.
pub fn sample_slice<R: Rng + ?Sized>(
    series: &TimeSeries,
    context_len: usize,
    horizon: usize,
    min_history: usize,
    features: &Arc<FeatureSpec>,
    rng: &mut R,
) -> Result<ForecastTask> {
    if context_len == 0 {
        return Err(Error::config("context_len", "must be at least 1"));
    }
    if min_history > context_len {
        return Err(Error::config(
            "min_history",
            format!("{min_history} exceeds context length {context_len}"),
        ));
    }
    let range = admissible_splits(series.len(), horizon, min_history).ok_or_else(|| {
        Error::Data(format!(
            "series {} ({} points) has no split with {min_history} context points and horizon {horizon}",
            series.item_id,
            series.len()
        ))
    })?;
    let split = rng.gen_range(range);
    ForecastTask::new(series, split, context_len, horizon, features.clone(), true)
}
