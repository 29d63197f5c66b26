use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Values of one series over a horizon, starting at series index `offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesValues {
    pub item_id: String,
    pub offset: usize,
    pub values: Vec<f64>,
}

/// Point forecasts of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub model_id: String,
    pub dataset_id: String,
    pub items: Vec<SeriesValues>,
}

impl ForecastSet {
    pub fn horizon(&self) -> Option<usize> {
        self.items.first().map(|s| s.values.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Smape,
    Nd,
    Mape,
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smape" => Ok(MetricKind::Smape),
            "nd" => Ok(MetricKind::Nd),
            "mape" => Ok(MetricKind::Mape),
            other => Err(Error::config("metric", format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Smape => "smape",
            MetricKind::Nd => "nd",
            MetricKind::Mape => "mape",
        })
    }
}

/// Pairs every forecast with its target, in forecast order.
pub fn align<'a>(
    forecasts: &'a ForecastSet,
    targets: &'a [SeriesValues],
) -> Result<Vec<(&'a SeriesValues, &'a SeriesValues)>> {
    let by_id: HashMap<&str, &SeriesValues> =
        targets.iter().map(|t| (t.item_id.as_str(), t)).collect();
    if by_id.len() != targets.len() {
        return Err(Error::Misaligned("duplicate target ids".into()));
    }
    if forecasts.items.len() != targets.len() {
        return Err(Error::Misaligned(format!(
            "{} forecasts for {} target series",
            forecasts.items.len(),
            targets.len()
        )));
    }
    let horizon = forecasts.horizon().unwrap_or(0);
    forecasts
        .items
        .iter()
        .map(|f| {
            let t = by_id
                .get(f.item_id.as_str())
                .ok_or_else(|| Error::Misaligned(format!("no target for item {}", f.item_id)))?;
            if f.values.len() != horizon {
                return Err(Error::Misaligned(format!(
                    "item {} has horizon {}, expected {horizon}",
                    f.item_id,
                    f.values.len()
                )));
            }
            if t.values.len() != f.values.len() || t.offset != f.offset {
                return Err(Error::Misaligned(format!(
                    "item {}: forecast covers {}..{}, target {}..{}",
                    f.item_id,
                    f.offset,
                    f.offset + f.values.len(),
                    t.offset,
                    t.offset + t.values.len()
                )));
            }
            Ok((f, *t))
        })
        .collect()
}

fn smape_terms(forecast: &[f64], target: &[f64]) -> f64 {
    forecast
        .iter()
        .zip(target)
        .map(|(&f, &z)| {
            let den = z.abs() + f.abs();
            if den == 0.0 {
                0.0
            } else {
                (z - f).abs() / den
            }
        })
        .sum()
}

/// sMAPE of one series: `(200/H) Σ |z − ẑ| / (|z| + |ẑ|)`, 0/0 terms as 0.
pub fn smape_series(forecast: &[f64], target: &[f64]) -> f64 {
    200.0 / forecast.len() as f64 * smape_terms(forecast, target)
}

/// Mean over series of the per-series sMAPE.
pub fn smape_metric(forecasts: &ForecastSet, targets: &[SeriesValues]) -> Result<f64> {
    let pairs = align(forecasts, targets)?;
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("sMAPE of an empty dataset".into()));
    }
    let total: f64 = pairs
        .iter()
        .map(|(f, t)| smape_series(&f.values, &t.values))
        .sum();
    Ok(total / pairs.len() as f64)
}

/// `Σ|z − ẑ| / Σ|z|` over every series and step.
pub fn nd_metric(forecasts: &ForecastSet, targets: &[SeriesValues]) -> Result<f64> {
    let pairs = align(forecasts, targets)?;
    let mut err = 0.0;
    let mut mass = 0.0;
    for (f, t) in &pairs {
        for (&fv, &zv) in f.values.iter().zip(&t.values) {
            err += (zv - fv).abs();
            mass += zv.abs();
        }
    }
    if mass <= 0.0 {
        return Err(Error::UndefinedMetric(
            "ND needs targets with nonzero absolute sum".into(),
        ));
    }
    Ok(err / mass)
}

/// Mean over series of `(100/H) Σ |z − ẑ| / |z|`; zero targets are an error.
pub fn mape_metric(forecasts: &ForecastSet, targets: &[SeriesValues]) -> Result<f64> {
    let pairs = align(forecasts, targets)?;
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("MAPE of an empty dataset".into()));
    }
    let zeros: Vec<String> = pairs
        .iter()
        .flat_map(|(_, t)| {
            t.values
                .iter()
                .enumerate()
                .filter(|(_, z)| **z == 0.0)
                .map(move |(i, _)| format!("({}, {})", t.item_id, t.offset + i))
        })
        .collect();
    if !zeros.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "MAPE undefined at zero targets {}",
            zeros.join(", ")
        )));
    }
    let total: f64 = pairs
        .iter()
        .map(|(f, t)| {
            let s: f64 = f
                .values
                .iter()
                .zip(&t.values)
                .map(|(&fv, &zv)| (zv - fv).abs() / zv.abs())
                .sum();
            100.0 / f.values.len() as f64 * s
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

pub fn metric(kind: MetricKind, forecasts: &ForecastSet, targets: &[SeriesValues]) -> Result<f64> {
    match kind {
        MetricKind::Smape => smape_metric(forecasts, targets),
        MetricKind::Nd => nd_metric(forecasts, targets),
        MetricKind::Mape => mape_metric(forecasts, targets),
    }
}

/// Metric value of one sub-dataset with its horizon and series count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub value: f64,
    pub horizon: usize,
    pub count: usize,
}

/// `Σ H·|D|·m / Σ H·|D|` over sub-datasets.
pub fn aggregate(scores: &[DatasetScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("aggregate of no datasets".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for s in scores {
        let w = (s.horizon * s.count) as f64;
        num += w * s.value;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "aggregate weights are all zero".into(),
        ));
    }
    Ok(num / den)
}
