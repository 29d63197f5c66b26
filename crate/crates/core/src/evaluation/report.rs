use serde::{Deserialize, Serialize};

use super::ensemble::ensemble_median;
use super::metrics::{metric, ForecastSet, MetricKind, SeriesValues};
use crate::{Error, Result};

/// z-value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model: String,
    pub value: f64,
}

/// Scores of k models on one dataset with their mean, 95% interval and
/// median-ensemble score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub metric: MetricKind,
    pub models: Vec<ModelScore>,
    pub mean: f64,
    /// Half-width `1.96 s / sqrt(k)` with `s` the sample standard deviation
    /// (0 for a single model).
    pub ci: f64,
    /// Score of the median ensemble; `None` for a single model.
    pub ensemble: Option<f64>,
}

/// `(mean, 1.96 s / sqrt(k))` of a list of scores.
pub fn mean_ci(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("no scores to summarize".into()));
    }
    let k = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / k;
    if scores.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((mean, Z_95 * var.sqrt() / k.sqrt()))
}

pub fn report(
    models: &[ForecastSet],
    targets: &[SeriesValues],
    dataset: &str,
    kind: MetricKind,
) -> Result<MetricReport> {
    if models.is_empty() {
        return Err(Error::UndefinedMetric("report needs at least one model".into()));
    }
    let scores = models
        .iter()
        .map(|m| {
            Ok(ModelScore {
                model: m.model_id.clone(),
                value: metric(kind, m, targets)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
    let (mean, ci) = mean_ci(&values)?;
    let ensemble = if models.len() > 1 {
        Some(metric(kind, &ensemble_median(models)?, targets)?)
    } else {
        None
    };
    Ok(MetricReport {
        dataset: dataset.to_string(),
        metric: kind,
        models: scores,
        mean,
        ci,
        ensemble,
    })
}
